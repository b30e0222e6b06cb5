use crate::imaging::{Channels, Image};

use super::{FeatureError, SiftConfig};

/// Single-channel `f32` plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Intensities scaled to `[0, 1]`. Expects a gray image.
    pub fn from_gray(img: &Image) -> Self {
        debug_assert_eq!(img.channels(), Channels::Gray);
        Plane {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.pixels().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Keep every second pixel in both directions.
    pub fn downsample2(&self) -> Plane {
        let w = (self.width / 2).max(1);
        let h = (self.height / 2).max(1);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.at(2 * x, 2 * y));
            }
        }
        Plane {
            width: w,
            height: h,
            data,
        }
    }

    pub fn sub(&self, other: &Plane) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k.into_iter().map(|v| v as f32).collect()
}

#[inline]
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * n - 2;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(src: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return src.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (w, h) = (src.width, src.height);
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0f32;
            for (j, kv) in k.iter().enumerate() {
                let sx = reflect(x as i64 + j as i64 - r, w);
                acc += kv * row[sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for (j, kv) in k.iter().enumerate() {
        for y in 0..h {
            let sy = reflect(y as i64 + j as i64 - r, h);
            let src_row = &tmp[sy * w..(sy + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += kv * s;
            }
        }
    }
    Plane {
        width: w,
        height: h,
        data: out,
    }
}

/// Blurred levels of one octave; level `i` has blur `sigma0 * 2^(i/s)` in octave units.
#[derive(Debug, Clone)]
pub struct Octave {
    pub levels: Vec<Plane>,
}

#[derive(Debug, Clone)]
pub struct GaussianPyramid {
    pub octaves: Vec<Octave>,
    pub sigma0: f64,
    pub scales_per_octave: usize,
}

impl GaussianPyramid {
    /// Blur of level `i` relative to its own octave's pixel grid.
    pub fn level_sigma(&self, level: f64) -> f64 {
        self.sigma0 * 2f64.powf(level / self.scales_per_octave as f64)
    }
}

/// Gaussian pyramid plus the difference-of-Gaussian planes of each octave.
#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub pyramid: GaussianPyramid,
    /// `dog[o][i] = octave[o].levels[i + 1] - octave[o].levels[i]`
    pub dog: Vec<Vec<Plane>>,
}

/// Smallest image side accepted by the scale-space builder.
pub const MIN_DIMENSION: usize = 16;

pub fn octave_count(min_dimension: usize) -> usize {
    ((min_dimension as f64).log2().floor() as usize).saturating_sub(2).max(1)
}

/// Build the Gaussian pyramid and its DoG stack from a gray image.
pub fn build_dog_pyramid(img: &Image, config: &SiftConfig) -> Result<ScaleSpace, FeatureError> {
    let gray = match img.channels() {
        Channels::Gray => img.clone(),
        Channels::Rgb => crate::imaging::to_grayscale(img),
    };
    let min_dim = gray.width().min(gray.height()) as usize;
    if min_dim < MIN_DIMENSION {
        return Err(FeatureError::ImageTooSmall {
            width: gray.width(),
            height: gray.height(),
            min: MIN_DIMENSION as u32,
        });
    }
    let s = config.scales_per_octave;
    let sigma0 = config.sigma0;
    let n_octaves = octave_count(min_dim);
    let k = 2f64.powf(1.0 / s as f64);

    let base_blur = (sigma0 * sigma0 - config.assumed_blur * config.assumed_blur)
        .max(0.01)
        .sqrt();
    let mut base = gaussian_blur(&Plane::from_gray(&gray), base_blur);

    let mut octaves = Vec::with_capacity(n_octaves);
    for o in 0..n_octaves {
        if o > 0 {
            let prev: &Octave = &octaves[o - 1];
            base = prev.levels[s].downsample2();
        }
        let mut levels = Vec::with_capacity(s + 3);
        levels.push(base.clone());
        for i in 1..s + 3 {
            let prev_sigma = sigma0 * k.powi(i as i32 - 1);
            let total = prev_sigma * k;
            let inc = (total * total - prev_sigma * prev_sigma).sqrt();
            let next = gaussian_blur(&levels[i - 1], inc);
            levels.push(next);
        }
        octaves.push(Octave { levels });
    }
    let dog = octaves
        .iter()
        .map(|oct| {
            oct.levels
                .windows(2)
                .map(|pair| pair[1].sub(&pair[0]))
                .collect()
        })
        .collect();
    Ok(ScaleSpace {
        pyramid: GaussianPyramid {
            octaves,
            sigma0,
            scales_per_octave: s,
        },
        dog,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn octave_count_rule() {
        assert_eq!(octave_count(270), 6);
        assert_eq!(octave_count(16), 2);
        assert_eq!(octave_count(64), 4);
    }

    #[test]
    fn blur_preserves_constant_and_mass() {
        let p = Plane {
            width: 20,
            height: 11,
            data: vec![0.4; 220],
        };
        let b = gaussian_blur(&p, 2.3);
        assert!(b.data.iter().all(|v| (v - 0.4).abs() < 1e-6));
    }

    #[test]
    fn levels_and_dog_shapes() {
        let img = Image::from_gray_fn(64, 48, |x, y| ((x * 13 + y * 7) % 255) as u8);
        let cfg = SiftConfig::default();
        let ss = build_dog_pyramid(&img, &cfg).unwrap();
        assert_eq!(ss.pyramid.octaves.len(), octave_count(48));
        for (o, oct) in ss.pyramid.octaves.iter().enumerate() {
            assert_eq!(oct.levels.len(), cfg.scales_per_octave + 3);
            assert_eq!(ss.dog[o].len(), cfg.scales_per_octave + 2);
            if o > 0 {
                let prev = &ss.pyramid.octaves[o - 1].levels[0];
                assert_eq!(oct.levels[0].width, prev.width / 2);
                assert_eq!(oct.levels[0].height, prev.height / 2);
            }
        }
    }

    #[test]
    fn constant_image_has_zero_dog() {
        let img = Image::from_gray_fn(40, 40, |_, _| 137);
        let ss = build_dog_pyramid(&img, &SiftConfig::default()).unwrap();
        for oct in &ss.dog {
            for plane in oct {
                assert!(plane.data.iter().all(|v| v.abs() < 1e-6));
            }
        }
    }

    #[test]
    fn small_image_rejected() {
        let img = Image::from_gray_fn(8, 8, |_, _| 0);
        assert!(matches!(
            build_dog_pyramid(&img, &SiftConfig::default()),
            Err(FeatureError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn dot_produces_dog_extremum_at_dot() {
        let img = Image::from_gray_fn(64, 64, |x, y| {
            let d2 = (x as i64 - 32).pow(2) + (y as i64 - 32).pow(2);
            if d2 <= 16 {
                255
            } else {
                0
            }
        });
        let ss = build_dog_pyramid(&img, &SiftConfig::default()).unwrap();
        // brute-force 3x3x3 scan over the first octave
        let dog = &ss.dog[0];
        let mut found = false;
        for i in 1..dog.len() - 1 {
            for y in 1..63 {
                for x in 1..63 {
                    let v = dog[i].at(x, y);
                    if v.abs() < 1e-3 {
                        continue;
                    }
                    let mut is_min = true;
                    let mut is_max = true;
                    for di in [i - 1, i, i + 1] {
                        for yy in y - 1..=y + 1 {
                            for xx in x - 1..=x + 1 {
                                if (di, yy, xx) == (i, y, x) {
                                    continue;
                                }
                                let n = dog[di].at(xx, yy);
                                is_min &= v < n;
                                is_max &= v > n;
                            }
                        }
                    }
                    if (is_min || is_max) && x.abs_diff(32) <= 1 && y.abs_diff(32) <= 1 {
                        found = true;
                    }
                }
            }
        }
        assert!(found, "no DoG extremum at the dot");
    }
}
