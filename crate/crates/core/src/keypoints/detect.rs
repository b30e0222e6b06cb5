use std::f64::consts::PI;

use super::pyramid::{Plane, ScaleSpace};
use super::{Keypoint, SiftConfig};

/// Pixels closer than this to an octave border are never keypoint candidates.
const IMAGE_BORDER: usize = 5;
const MAX_REFINE_STEPS: usize = 5;
const ORIENTATION_BINS: usize = 36;
const ORIENTATION_SIGMA_FACTOR: f64 = 1.5;
const ORIENTATION_RADIUS_FACTOR: f64 = 3.0 * ORIENTATION_SIGMA_FACTOR;
const ORIENTATION_PEAK_RATIO: f64 = 0.8;

/// Localized extremum before orientation assignment.
#[derive(Debug, Clone, Copy)]
struct Extremum {
    octave: usize,
    layer: usize,
    x: usize,
    y: usize,
    offset: [f64; 3],
    response: f64,
}

/// Scale-space extrema, refined to sub-pixel accuracy, filtered for contrast and edge
/// response, with one keypoint per dominant gradient orientation.
pub fn detect_keypoints(space: &ScaleSpace, config: &SiftConfig) -> Vec<Keypoint> {
    let mut out = Vec::new();
    let s = space.pyramid.scales_per_octave;
    let prefilter = 0.5 * config.contrast_threshold;
    for (o, dog) in space.dog.iter().enumerate() {
        let (w, h) = (dog[0].width, dog[0].height);
        if w <= 2 * IMAGE_BORDER || h <= 2 * IMAGE_BORDER {
            continue;
        }
        for layer in 1..=s {
            for y in IMAGE_BORDER..h - IMAGE_BORDER {
                for x in IMAGE_BORDER..w - IMAGE_BORDER {
                    let v = dog[layer].at(x, y);
                    if v.abs() as f64 <= prefilter || !is_extremum(dog, layer, x, y) {
                        continue;
                    }
                    if let Some(ext) = refine(dog, o, layer, x, y, config) {
                        assign_orientations(space, &ext, &mut out);
                    }
                }
            }
        }
    }
    out
}

fn is_extremum(dog: &[Plane], layer: usize, x: usize, y: usize) -> bool {
    let v = dog[layer].at(x, y);
    let mut is_max = true;
    let mut is_min = true;
    for plane in &dog[layer - 1..=layer + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if std::ptr::eq(plane, &dog[layer]) && xx == x && yy == y {
                    continue;
                }
                let n = plane.at(xx, yy);
                is_max &= v > n;
                is_min &= v < n;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    true
}

fn gradient_hessian(dog: &[Plane], l: usize, x: usize, y: usize) -> ([f64; 3], [[f64; 3]; 3]) {
    let d = |dl: isize, dx: isize, dy: isize| -> f64 {
        dog[(l as isize + dl) as usize].at((x as isize + dx) as usize, (y as isize + dy) as usize)
            as f64
    };
    let v2 = 2.0 * d(0, 0, 0);
    let g = [
        (d(0, 1, 0) - d(0, -1, 0)) * 0.5,
        (d(0, 0, 1) - d(0, 0, -1)) * 0.5,
        (d(1, 0, 0) - d(-1, 0, 0)) * 0.5,
    ];
    let dxx = d(0, 1, 0) + d(0, -1, 0) - v2;
    let dyy = d(0, 0, 1) + d(0, 0, -1) - v2;
    let dss = d(1, 0, 0) + d(-1, 0, 0) - v2;
    let dxy = (d(0, 1, 1) - d(0, -1, 1) - d(0, 1, -1) + d(0, -1, -1)) * 0.25;
    let dxs = (d(1, 1, 0) - d(1, -1, 0) - d(-1, 1, 0) + d(-1, -1, 0)) * 0.25;
    let dys = (d(1, 0, 1) - d(1, 0, -1) - d(-1, 0, 1) + d(-1, 0, -1)) * 0.25;
    (g, [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
}

/// Solve `a * x = b` for a symmetric 3x3 system by Cramer's rule.
fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        let d = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        *o = d / det;
    }
    Some(out)
}

fn refine(
    dog: &[Plane],
    octave: usize,
    layer: usize,
    x: usize,
    y: usize,
    config: &SiftConfig,
) -> Option<Extremum> {
    let s = dog.len() - 2;
    let (w, h) = (dog[0].width, dog[0].height);
    let (mut x, mut y, mut layer) = (x, y, layer);
    let mut step = 0;
    let (offset, grad) = loop {
        let (g, hess) = gradient_hessian(dog, layer, x, y);
        let off = solve3(hess, [-g[0], -g[1], -g[2]])?;
        if off.iter().all(|v| v.abs() < 0.5) {
            break (off, g);
        }
        if off.iter().any(|v| v.abs() > (i32::MAX / 3) as f64) {
            return None;
        }
        let nx = x as i64 + off[0].round() as i64;
        let ny = y as i64 + off[1].round() as i64;
        let nl = layer as i64 + off[2].round() as i64;
        if nl < 1
            || nl > s as i64
            || nx < IMAGE_BORDER as i64
            || nx >= (w - IMAGE_BORDER) as i64
            || ny < IMAGE_BORDER as i64
            || ny >= (h - IMAGE_BORDER) as i64
        {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        layer = nl as usize;
        step += 1;
        if step >= MAX_REFINE_STEPS {
            return None;
        }
    };
    let value = dog[layer].at(x, y) as f64;
    let response = value + 0.5 * (grad[0] * offset[0] + grad[1] * offset[1] + grad[2] * offset[2]);
    if response.abs() < config.contrast_threshold {
        return None;
    }
    // principal curvature ratio on the 2x2 spatial Hessian
    let (_, hess) = gradient_hessian(dog, layer, x, y);
    let tr = hess[0][0] + hess[1][1];
    let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[0][1];
    let r = config.edge_threshold;
    if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
        return None;
    }
    Some(Extremum {
        octave,
        layer,
        x,
        y,
        offset,
        response,
    })
}

/// Gradient magnitude and angle (radians, `atan2(dy, dx)`) at an interior pixel.
#[inline]
pub(crate) fn gradient(plane: &Plane, x: usize, y: usize) -> (f64, f64) {
    let dx = plane.at(x + 1, y) as f64 - plane.at(x - 1, y) as f64;
    let dy = plane.at(x, y + 1) as f64 - plane.at(x, y - 1) as f64;
    ((dx * dx + dy * dy).sqrt(), dy.atan2(dx))
}

fn assign_orientations(space: &ScaleSpace, ext: &Extremum, out: &mut Vec<Keypoint>) {
    let pyr = &space.pyramid;
    let level_f = ext.layer as f64 + ext.offset[2];
    let octave_sigma = pyr.level_sigma(level_f);
    let plane = &pyr.octaves[ext.octave].levels[ext.layer];
    let ox = ext.x as f64 + ext.offset[0];
    let oy = ext.y as f64 + ext.offset[1];

    let sigma = ORIENTATION_SIGMA_FACTOR * octave_sigma;
    let radius = (ORIENTATION_RADIUS_FACTOR * octave_sigma).round() as i64;
    let denom = 2.0 * sigma * sigma;
    let mut hist = [0.0f64; ORIENTATION_BINS];
    let (cx, cy) = (ext.x as i64, ext.y as i64);
    for dy in -radius..=radius {
        let yy = cy + dy;
        if yy <= 0 || yy >= plane.height as i64 - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let xx = cx + dx;
            if xx <= 0 || xx >= plane.width as i64 - 1 {
                continue;
            }
            let (mag, ang) = gradient(plane, xx as usize, yy as usize);
            let weight = (-((dx * dx + dy * dy) as f64) / denom).exp();
            let mut bin = (ORIENTATION_BINS as f64 * ang.rem_euclid(2.0 * PI) / (2.0 * PI))
                .round() as usize;
            if bin >= ORIENTATION_BINS {
                bin -= ORIENTATION_BINS;
            }
            hist[bin] += weight * mag;
        }
    }
    // [1 4 6 4 1] circular smoothing
    let n = ORIENTATION_BINS;
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            (hist[(i + n - 2) % n] + hist[(i + 2) % n]) / 16.0
                + (hist[(i + n - 1) % n] + hist[(i + 1) % n]) * 4.0 / 16.0
                + hist[i] * 6.0 / 16.0
        })
        .collect();
    let max = smooth.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return;
    }
    let scale = 2f64.powi(ext.octave as i32);
    for i in 0..n {
        let left = smooth[(i + n - 1) % n];
        let right = smooth[(i + 1) % n];
        let v = smooth[i];
        if v > left && v > right && v >= ORIENTATION_PEAK_RATIO * max {
            let interp = 0.5 * (left - right) / (left - 2.0 * v + right);
            let bin = (i as f64 + interp).rem_euclid(n as f64);
            let mut orientation = (bin * 2.0 * PI / n as f64) as f32;
            if orientation >= std::f32::consts::TAU {
                orientation = 0.0;
            }
            out.push(Keypoint {
                x: (ox * scale) as f32,
                y: (oy * scale) as f32,
                scale: (octave_sigma * scale) as f32,
                orientation,
                response: ext.response as f32,
                octave: ext.octave,
                layer: ext.layer,
                octave_x: ox as f32,
                octave_y: oy as f32,
                octave_sigma: octave_sigma as f32,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_dog_pyramid, SiftConfig};
    use super::*;
    use crate::imaging::{rotate90_cw, Image};

    fn blob(size: u32, cx: f64, cy: f64, sigma: f64) -> Image {
        Image::from_gray_fn(size, size, |x, y| {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            (255.0 * (-d2 / (2.0 * sigma * sigma)).exp()).round() as u8
        })
    }

    #[test]
    fn constant_image_has_no_keypoints() {
        let img = Image::from_gray_fn(64, 64, |_, _| 90);
        let cfg = SiftConfig::default();
        let ss = build_dog_pyramid(&img, &cfg).unwrap();
        assert!(detect_keypoints(&ss, &cfg).is_empty());
    }

    #[test]
    fn blob_detected_near_center() {
        let img = blob(64, 32.0, 32.0, 3.0);
        let cfg = SiftConfig::default();
        let ss = build_dog_pyramid(&img, &cfg).unwrap();
        let kps = detect_keypoints(&ss, &cfg);
        assert!(!kps.is_empty());
        assert!(kps
            .iter()
            .any(|k| (k.x - 32.0).abs() <= 2.0 && (k.y - 32.0).abs() <= 2.0));
        for k in &kps {
            assert!((0.0..2.0 * std::f32::consts::PI).contains(&k.orientation));
            assert!(k.x >= 0.0 && k.y >= 0.0 && k.x < 64.0 && k.y < 64.0);
        }
    }

    /// Blob with a smaller lobe off to one side so it has a dominant orientation. Odd
    /// size keeps the even-pixel subsampling grid aligned under a 90° rotation.
    fn comma() -> Image {
        let c = 32.0;
        Image::from_gray_fn(65, 65, |x, y| {
            let (x, y) = (x as f64, y as f64);
            let a = (-((x - c).powi(2) + (y - c).powi(2)) / (2.0 * 9.0)).exp();
            let b = (-((x - c - 4.0).powi(2) + (y - c - 1.0).powi(2)) / (2.0 * 2.0)).exp();
            (190.0 * a + 65.0 * b).round().min(255.0) as u8
        })
    }

    #[test]
    fn rotation_by_90_shifts_orientation() {
        let cfg = SiftConfig::default();
        let img = comma();
        let rot = rotate90_cw(&img);
        let detect = |img: &Image| detect_keypoints(&build_dog_pyramid(img, &cfg).unwrap(), &cfg);
        let a = detect(&img);
        let b = detect(&rot);
        let mut compared = 0;
        for ka in a.iter().filter(|k| (k.x - 32.0).abs() <= 6.0 && (k.y - 32.0).abs() <= 6.0) {
            let (ex, ey) = (64.0 - ka.y, ka.x);
            let hit = b.iter().any(|kb| {
                let diff = (kb.orientation - ka.orientation).rem_euclid(2.0 * std::f32::consts::PI);
                (kb.x - ex).abs() < 0.5
                    && (kb.y - ey).abs() < 0.5
                    && (diff - std::f32::consts::FRAC_PI_2).abs() < 0.1
            });
            assert!(hit, "no rotated counterpart for {ka:?}");
            compared += 1;
        }
        assert!(compared > 0);
    }

    #[test]
    fn solve3_identity() {
        let x = solve3([[2.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 1.0]], [2.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, [1.0, 0.5, 3.0]);
        assert!(solve3([[0.0; 3]; 3], [1.0; 3]).is_none());
    }
}
