//! Scale-invariant keypoints: difference-of-Gaussian detection, 128-d gradient
//! descriptors and brute-force ratio-test matching.
//!
//! Parameters follow Lowe's published defaults (sigma 1.6, three scales per octave,
//! contrast 0.03 on `[0, 1]` intensities, edge ratio 10, clip 0.2). The input is not
//! upsampled; the octave count is `floor(log2(min side)) - 2`.

mod descriptor;
mod detect;
mod matching;
mod pyramid;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use descriptor::compute_descriptors;
pub use detect::detect_keypoints;
pub use matching::{match_brute_force, score_against_classes};
pub use pyramid::{
    build_dog_pyramid, gaussian_blur, octave_count, GaussianPyramid, Octave, Plane, ScaleSpace,
    MIN_DIMENSION,
};

use crate::imaging::Image;
use crate::persist::{self, PersistError};
use crate::ClassId;

pub const DESCRIPTOR_LEN: usize = 128;
pub const FEATURES_SCHEMA: &str = "idclass.features/v1";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image {width}x{height} is smaller than the {min}px minimum side")]
    ImageTooSmall { width: u32, height: u32, min: u32 },
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("invalid feature file: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiftConfig {
    pub sigma0: f64,
    /// Blur already present in the input image.
    pub assumed_blur: f64,
    pub scales_per_octave: usize,
    pub contrast_threshold: f64,
    pub edge_threshold: f64,
    pub descriptor_clip: f64,
    /// Keep at most this many keypoints, strongest `|response|` first. `0` keeps all.
    pub max_features: usize,
}

impl Default for SiftConfig {
    fn default() -> Self {
        SiftConfig {
            sigma0: 1.6,
            assumed_blur: 0.5,
            scales_per_octave: 3,
            contrast_threshold: 0.03,
            edge_threshold: 10.0,
            descriptor_clip: 0.2,
            max_features: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Position in input-image pixels.
    pub x: f32,
    pub y: f32,
    /// Blur sigma in input-image pixels.
    pub scale: f32,
    /// Radians in `[0, 2π)`.
    pub orientation: f32,
    pub response: f32,
    pub octave: usize,
    pub layer: usize,
    pub octave_x: f32,
    pub octave_y: f32,
    pub octave_sigma: f32,
}

impl Keypoint {
    /// Placeholder keypoint at an input-image position (octave 0, layer 1).
    pub fn at(x: f32, y: f32) -> Self {
        Keypoint {
            x,
            y,
            scale: 1.6,
            orientation: 0.0,
            response: 0.0,
            octave: 0,
            layer: 1,
            octave_x: x,
            octave_y: y,
            octave_sigma: 1.6,
        }
    }
}

/// 4×4 spatial × 8 orientation histogram, unit L2 norm (or all zeros for a flat patch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct Descriptor(Vec<f32>);

impl Descriptor {
    pub fn from_slice(values: &[f32]) -> Self {
        assert_eq!(values.len(), DESCRIPTOR_LEN, "descriptor length");
        Descriptor(values.to_vec())
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f32>> for Descriptor {
    type Error = String;

    fn try_from(v: Vec<f32>) -> Result<Self, Self::Error> {
        if v.len() != DESCRIPTOR_LEN {
            return Err(format!("descriptor has {} values, expected {DESCRIPTOR_LEN}", v.len()));
        }
        Ok(Descriptor(v))
    }
}

impl From<Descriptor> for Vec<f32> {
    fn from(d: Descriptor) -> Self {
        d.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
    pub source_class: Option<ClassId>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }
}

/// Detect keypoints and describe them. Strongest keypoints are kept when the config caps
/// the count.
pub fn extract_features(img: &Image, config: &SiftConfig) -> Result<FeatureSet, FeatureError> {
    let space = build_dog_pyramid(img, config)?;
    let mut kps = detect_keypoints(&space, config);
    if config.max_features > 0 && kps.len() > config.max_features {
        kps.sort_by(|a, b| {
            b.response
                .abs()
                .total_cmp(&a.response.abs())
                .then(a.y.total_cmp(&b.y))
                .then(a.x.total_cmp(&b.x))
                .then(a.orientation.total_cmp(&b.orientation))
        });
        kps.truncate(config.max_features);
    }
    Ok(compute_descriptors(&space.pyramid, &kps, config))
}

#[derive(Serialize, Deserialize)]
struct FeatureFile {
    schema: String,
    #[serde(flatten)]
    features: FeatureSet,
}

pub fn save_features(features: &FeatureSet, path: &Path) -> Result<(), FeatureError> {
    let file = FeatureFile {
        schema: FEATURES_SCHEMA.to_string(),
        features: features.clone(),
    };
    persist::write_json_atomic(path, &file)?;
    Ok(())
}

pub fn load_features(path: &Path) -> Result<FeatureSet, FeatureError> {
    let file: FeatureFile = persist::read_json(path)?;
    if file.schema != FEATURES_SCHEMA {
        return Err(FeatureError::Schema(format!(
            "unsupported schema {:?}",
            file.schema
        )));
    }
    if file.features.keypoints.len() != file.features.descriptors.len() {
        return Err(FeatureError::Schema(
            "keypoint and descriptor counts differ".into(),
        ));
    }
    Ok(file.features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{rotate90_cw, Image};

    /// Structured 96x96 test pattern: rectangles, a disc and a diagonal bar.
    fn pattern() -> Image {
        Image::from_gray_fn(96, 96, |x, y| {
            let (xf, yf) = (x as f64, y as f64);
            let mut v = 40.0;
            if (10..40).contains(&x) && (12..30).contains(&y) {
                v = 220.0;
            }
            if (xf - 64.0).powi(2) + (yf - 60.0).powi(2) < 144.0 {
                v = 180.0;
            }
            if (xf - yf - 5.0).abs() < 3.0 && y > 45 {
                v = 250.0;
            }
            if (55..85).contains(&x) && (12..20).contains(&y) {
                v = 120.0;
            }
            v as u8
        })
    }

    #[test]
    fn descriptors_are_unit_norm() {
        let fs = extract_features(&pattern(), &SiftConfig::default()).unwrap();
        assert!(!fs.is_empty());
        assert_eq!(fs.keypoints.len(), fs.descriptors.len());
        for d in &fs.descriptors {
            assert_eq!(d.values().len(), DESCRIPTOR_LEN);
            assert!((d.norm() - 1.0).abs() < 1e-6, "norm {}", d.norm());
            assert!(d.values().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn flat_patch_gives_zero_descriptor() {
        let img = Image::from_gray_fn(64, 64, |_, _| 77);
        let space = build_dog_pyramid(&img, &SiftConfig::default()).unwrap();
        let fs = compute_descriptors(&space.pyramid, &[Keypoint::at(32.0, 32.0)], &SiftConfig::default());
        assert!(fs.descriptors[0].values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rotated_keypoint_descriptor_is_close() {
        let cfg = SiftConfig {
            max_features: 0,
            ..SiftConfig::default()
        };
        let img = pattern();
        let rot = rotate90_cw(&img);
        let a = extract_features(&img, &cfg).unwrap();
        let b = extract_features(&rot, &cfg).unwrap();
        let n = img.height() as f32;
        // compare every keypoint with its counterpart at the rotated position
        let mut best = f64::INFINITY;
        let mut compared = 0;
        for (ka, da) in a.keypoints.iter().zip(&a.descriptors) {
            let (ex, ey) = (n - 1.0 - ka.y, ka.x);
            for (kb, db) in b.keypoints.iter().zip(&b.descriptors) {
                if (kb.x - ex).abs() < 1.0
                    && (kb.y - ey).abs() < 1.0
                    && (kb.scale / ka.scale - 1.0).abs() < 0.1
                {
                    let dist = da
                        .values()
                        .iter()
                        .zip(db.values())
                        .map(|(p, q)| ((p - q) as f64).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    best = best.min(dist);
                    compared += 1;
                }
            }
        }
        assert!(compared > 0);
        // measured 0.0 at the best pair: the 90° rotation is pixel-exact
        assert!(best < 0.45, "best distance {best}");
    }

    #[test]
    fn feature_file_roundtrip_and_schema_check() {
        let dir = tempfile::tempdir().unwrap();
        let mut fs = extract_features(&pattern(), &SiftConfig::default()).unwrap();
        fs.source_class = Some(ClassId(3));
        let p = dir.path().join("f.json");
        save_features(&fs, &p).unwrap();
        assert_eq!(load_features(&p).unwrap(), fs);

        std::fs::write(&p, r#"{"schema":"other","keypoints":[],"descriptors":[],"source_class":null}"#).unwrap();
        assert!(matches!(load_features(&p), Err(FeatureError::Schema(_))));
        std::fs::write(&p, r#"{"schema":"idclass.features/v1","keypoints":[],"descriptors":[[1.0]],"source_class":null}"#).unwrap();
        assert!(load_features(&p).is_err());
    }

    #[test]
    fn max_features_caps_count() {
        let cfg = SiftConfig {
            max_features: 3,
            ..SiftConfig::default()
        };
        let fs = extract_features(&pattern(), &cfg).unwrap();
        assert!(fs.len() <= 3);
    }
}
