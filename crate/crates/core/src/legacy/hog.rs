use serde::{Deserialize, Serialize};

use super::LegacyError;
use crate::imaging::{Channels, Image};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HogConfig {
    pub cell_size: usize,
    pub block_cells: usize,
    pub bins: usize,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig {
            cell_size: 8,
            block_cells: 2,
            bins: 9,
        }
    }
}

/// Size the pipeline resizes to before HOG so both sides are multiples of 8.
pub const HOG_TARGET: (u32, u32) = (424, 272);

const BLOCK_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HogVector {
    pub values: Vec<f64>,
}

/// Number of values [`compute_hog`] produces for a `width`×`height` image.
pub fn hog_len(width: usize, height: usize, config: &HogConfig) -> usize {
    let cx = width / config.cell_size;
    let cy = height / config.cell_size;
    let bx = (cx + 1).saturating_sub(config.block_cells);
    let by = (cy + 1).saturating_sub(config.block_cells);
    bx * by * config.block_cells * config.block_cells * config.bins
}

/// Dense HOG over a gray image. Rows or columns beyond the last whole cell are ignored.
/// Unsigned orientations are linearly split between the two nearest bin centres
/// `k * 180° / bins`; blocks overlap with a one-cell stride and are L2 normalized.
pub fn compute_hog(img: &Image, config: &HogConfig) -> Result<HogVector, LegacyError> {
    let gray = match img.channels() {
        Channels::Gray => img.clone(),
        Channels::Rgb => crate::imaging::to_grayscale(img),
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let cs = config.cell_size;
    let (cx, cy) = (w / cs, h / cs);
    if cx < config.block_cells || cy < config.block_cells {
        return Err(LegacyError::ImageTooSmall {
            width: w as u32,
            height: h as u32,
        });
    }
    let px = gray.pixels();
    let at = |x: usize, y: usize| px[y * w + x] as f64;
    let nb = config.bins;
    let bin_width = std::f64::consts::PI / nb as f64;
    let mut cells = vec![0.0f64; cx * cy * nb];
    for y in 0..cy * cs {
        for x in 0..cx * cs {
            let dx = at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y);
            let dy = at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1));
            let mag = (dx * dx + dy * dy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let ang = dy.atan2(dx).rem_euclid(std::f64::consts::PI);
            let pos = ang / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = lo as usize % nb;
            let hi = (lo + 1) % nb;
            let base = ((y / cs) * cx + x / cs) * nb;
            cells[base + lo] += mag * (1.0 - frac);
            cells[base + hi] += mag * frac;
        }
    }
    let bc = config.block_cells;
    let mut values = Vec::with_capacity(hog_len(w, h, config));
    let mut block = Vec::with_capacity(bc * bc * nb);
    for by in 0..=cy - bc {
        for bx in 0..=cx - bc {
            block.clear();
            for j in 0..bc {
                for i in 0..bc {
                    let base = ((by + j) * cx + bx + i) * nb;
                    block.extend_from_slice(&cells[base..base + nb]);
                }
            }
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + BLOCK_EPS * BLOCK_EPS).sqrt();
            values.extend(block.iter().map(|v| v / norm));
        }
    }
    Ok(HogVector { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{resize, rotate90_cw};
    use crate::legacy::cosine_similarity;

    #[test]
    fn constant_image_is_all_zero() {
        let img = Image::from_gray_fn(32, 24, |_, _| 100);
        let v = compute_hog(&img, &HogConfig::default()).unwrap();
        assert_eq!(v.values.len(), hog_len(32, 24, &HogConfig::default()));
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn vertical_edge_fills_bin_zero() {
        let img = Image::from_gray_fn(32, 32, |x, _| if x < 12 { 0 } else { 200 });
        let cfg = HogConfig::default();
        let v = compute_hog(&img, &cfg).unwrap();
        // block (0,0) covers cells (0,0),(1,0),(0,1),(1,1); the edge runs through cell column 1
        let block = &v.values[..36];
        for cell in [1, 3] {
            let c = &block[cell * 9..cell * 9 + 9];
            assert!(c[0] > 0.0);
            assert!(c[1..].iter().all(|&x| x == 0.0));
        }
        for cell in [0, 2] {
            assert!(block[cell * 9..cell * 9 + 9].iter().all(|&x| x == 0.0));
        }
        // two cells with energy 8 rows * (200 + 200) each, normalized: 1/sqrt(2)
        assert!((block[9] - 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn invariant_to_intensity_offset() {
        let base = |x: u32, y: u32| (((x * 5 + y * 11) % 120) + 20) as u8;
        let a = Image::from_gray_fn(40, 40, base);
        let b = Image::from_gray_fn(40, 40, |x, y| base(x, y) + 60);
        let cfg = HogConfig::default();
        assert_eq!(compute_hog(&a, &cfg).unwrap(), compute_hog(&b, &cfg).unwrap());
    }

    #[test]
    fn rotation_changes_the_descriptor() {
        let img = Image::from_gray_fn(HOG_TARGET.0, HOG_TARGET.1, |x, y| {
            let stripe = (x / 20) % 2 == 0;
            let bar = (100..160).contains(&y) && x > 50;
            if bar {
                230
            } else if stripe {
                40
            } else {
                120
            }
        });
        let rot = resize(&rotate90_cw(&img), HOG_TARGET.0, HOG_TARGET.1);
        let cfg = HogConfig::default();
        let a = compute_hog(&img, &cfg).unwrap();
        let b = compute_hog(&rot, &cfg).unwrap();
        let sim: f64 = cosine_similarity(&a.values, &b.values).unwrap();
        assert!(sim < 0.9, "similarity {sim}");
    }

    #[test]
    fn too_small() {
        let img = Image::from_gray_fn(12, 40, |_, _| 0);
        assert!(matches!(
            compute_hog(&img, &HogConfig::default()),
            Err(LegacyError::ImageTooSmall { .. })
        ));
    }
}
