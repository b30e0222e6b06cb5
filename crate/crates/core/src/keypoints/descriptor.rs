use std::f64::consts::PI;

use super::detect::gradient;
use super::pyramid::GaussianPyramid;
use super::{Descriptor, FeatureSet, Keypoint, SiftConfig, DESCRIPTOR_LEN};

const SPATIAL_BINS: usize = 4;
const ORIENTATION_BINS: usize = 8;
/// Width of one spatial bin in units of the keypoint's octave sigma.
const BIN_WIDTH_FACTOR: f64 = 3.0;

/// One 128-d descriptor per keypoint, sampled in the keypoint's rotated frame.
pub fn compute_descriptors(
    pyramid: &GaussianPyramid,
    keypoints: &[Keypoint],
    config: &SiftConfig,
) -> FeatureSet {
    let descriptors = keypoints
        .iter()
        .map(|kp| describe(pyramid, kp, config.descriptor_clip))
        .collect();
    FeatureSet {
        keypoints: keypoints.to_vec(),
        descriptors,
        source_class: None,
    }
}

fn describe(pyramid: &GaussianPyramid, kp: &Keypoint, clip: f64) -> Descriptor {
    let d = SPATIAL_BINS;
    let n = ORIENTATION_BINS;
    let plane = &pyramid.octaves[kp.octave].levels[kp.layer];
    let (w, h) = (plane.width as i64, plane.height as i64);
    let cx = (kp.octave_x as f64).round() as i64;
    let cy = (kp.octave_y as f64).round() as i64;
    let theta = kp.orientation as f64;
    let hist_width = BIN_WIDTH_FACTOR * kp.octave_sigma as f64;
    let max_radius = ((w * w + h * h) as f64).sqrt();
    let radius = (hist_width * std::f64::consts::SQRT_2 * (d as f64 + 1.0) * 0.5)
        .round()
        .min(max_radius) as i64;
    let (sin_t, cos_t) = theta.sin_cos();
    let (sin_t, cos_t) = (sin_t / hist_width, cos_t / hist_width);
    let bins_per_rad = n as f64 / (2.0 * PI);
    let exp_scale = -1.0 / (d as f64 * d as f64 * 0.5);

    let stride_r = (d + 2) * (n + 2);
    let stride_c = n + 2;
    let mut hist = vec![0.0f64; (d + 2) * (d + 2) * (n + 2)];

    for i in -radius..=radius {
        for j in -radius..=radius {
            let c_rot = j as f64 * cos_t + i as f64 * sin_t;
            let r_rot = -(j as f64) * sin_t + i as f64 * cos_t;
            let rbin = r_rot + d as f64 / 2.0 - 0.5;
            let cbin = c_rot + d as f64 / 2.0 - 0.5;
            if rbin <= -1.0 || rbin >= d as f64 || cbin <= -1.0 || cbin >= d as f64 {
                continue;
            }
            let (x, y) = (cx + j, cy + i);
            if x <= 0 || x >= w - 1 || y <= 0 || y >= h - 1 {
                continue;
            }
            let (mag, ang) = gradient(plane, x as usize, y as usize);
            let weight = ((c_rot * c_rot + r_rot * r_rot) * exp_scale).exp();
            let obin = (ang - theta).rem_euclid(2.0 * PI) * bins_per_rad;
            let value = mag * weight;

            let r0 = rbin.floor();
            let c0 = cbin.floor();
            let o0 = obin.floor();
            let (dr, dc, dob) = (rbin - r0, cbin - c0, obin - o0);
            let (r0, c0) = (r0 as i64, c0 as i64);
            let mut o0 = o0 as i64;
            if o0 < 0 {
                o0 += n as i64;
            }
            if o0 >= n as i64 {
                o0 -= n as i64;
            }
            for (ri, rw) in [(0i64, 1.0 - dr), (1, dr)] {
                for (ci, cw) in [(0i64, 1.0 - dc), (1, dc)] {
                    for (oi, ow) in [(0i64, 1.0 - dob), (1, dob)] {
                        let idx = ((r0 + 1 + ri) as usize) * stride_r
                            + ((c0 + 1 + ci) as usize) * stride_c
                            + (o0 + oi) as usize;
                        hist[idx] += value * rw * cw * ow;
                    }
                }
            }
        }
    }

    let mut out = [0.0f64; DESCRIPTOR_LEN];
    for r in 0..d {
        for c in 0..d {
            let base = (r + 1) * stride_r + (c + 1) * stride_c;
            // fold the wrap-around orientation bin back onto bin 0
            hist[base] += hist[base + n];
            hist[base + 1] += hist[base + n + 1];
            for o in 0..n {
                out[(r * d + c) * n + o] = hist[base + o];
            }
        }
    }
    normalize_clip(&mut out, clip);
    Descriptor::from_slice(&out.map(|v| v as f32))
}

/// L2-normalize, clip each entry at `clip`, renormalize. A zero vector stays zero.
pub(crate) fn normalize_clip(v: &mut [f64], clip: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= f64::MIN_POSITIVE {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    for x in v.iter_mut() {
        *x = (*x / norm).min(clip);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}
