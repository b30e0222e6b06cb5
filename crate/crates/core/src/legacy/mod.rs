//! Whole-image descriptors compared by cosine similarity: HOG, colour-name histograms and
//! the 21-cell colour spatial pyramid.

mod color;
mod hog;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use color::{
    color_histogram, color_name_centroid, sp3, sp3_regions, ColorCentroid, ColorCentroids,
    ColorHistogram, ColorNamer, Sp3Vector, SP3_CELLS,
};
pub use hog::{compute_hog, hog_len, HogConfig, HogVector, HOG_TARGET};

use crate::imaging::{resize, Image};
use crate::scalar::Scalar;
use crate::ClassId;

#[derive(Debug, Error)]
pub enum LegacyError {
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("image {width}x{height} is too small")]
    ImageTooSmall { width: u32, height: u32 },
    #[error("no colour rule fired for rgb {0:?}")]
    UnknownColor([u8; 3]),
    #[error("invalid colour table: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// `dot(a, b) / (|a| |b|)`. Fails when either vector is all zeros.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T, LegacyError> {
    if a.len() != b.len() {
        return Err(LegacyError::LengthMismatch(a.len(), b.len()));
    }
    let mut dot = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return Err(LegacyError::ZeroVector);
    }
    let c = dot / (na.sqrt() * nb.sqrt());
    Ok(c.max(-T::one()).min(T::one()))
}

/// Sources ranked by cosine similarity to `sample`, best first. Equal similarities keep
/// source order.
pub fn classify_similarity<T: Scalar>(
    sample: &[T],
    sources: &[(ClassId, Vec<T>)],
) -> Result<Vec<(ClassId, T)>, LegacyError> {
    let mut ranked = sources
        .iter()
        .map(|(id, v)| cosine_similarity(sample, v).map(|s| (*id, s)))
        .collect::<Result<Vec<_>, _>>()?;
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    Ok(ranked)
}

/// Which blocks make up the descriptor and how they are weighted when concatenated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescriptorConfig {
    pub hog: Option<HogConfig>,
    pub sp3: bool,
    pub hog_weight: f64,
    pub color_weight: f64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig {
            hog: Some(HogConfig::default()),
            sp3: true,
            hog_weight: 1.0,
            color_weight: 1.0,
        }
    }
}

/// HOG of the image resized to [`HOG_TARGET`] followed by its SP3 colour vector.
pub fn describe_image(
    img: &Image,
    config: &DescriptorConfig,
    namer: &dyn ColorNamer,
) -> Result<Vec<f64>, LegacyError> {
    let resized = resize(img, HOG_TARGET.0, HOG_TARGET.1);
    let mut out = Vec::new();
    if let Some(hc) = &config.hog {
        out.extend(
            compute_hog(&resized, hc)?
                .values
                .into_iter()
                .map(|v| v * config.hog_weight),
        );
    }
    if config.sp3 {
        out.extend(
            sp3(&resized, namer)?
                .flatten()
                .into_iter()
                .map(|v| v * config.color_weight),
        );
    }
    if out.is_empty() {
        return Err(LegacyError::Config("no descriptor blocks enabled".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_cases() {
        let v = [0.3, -1.0, 2.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0f64).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c: f64 = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((c - 32.0 / (14f64.sqrt() * 77f64.sqrt())).abs() < 1e-15);
        assert!((c - 0.974632).abs() < 1e-6);
        assert!(matches!(
            cosine_similarity(&[0.0f32, 0.0], &[1.0, 1.0]),
            Err(LegacyError::ZeroVector)
        ));
        assert!(cosine_similarity(&[1.0f32], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn ranking() {
        let sources = vec![(ClassId(1), vec![1.0, 0.0]), (ClassId(2), vec![0.0, 1.0])];
        let r = classify_similarity(&[0.0, 3.0], &sources).unwrap();
        assert_eq!(r, vec![(ClassId(2), 1.0), (ClassId(1), 0.0)]);
    }

    #[test]
    fn descriptor_of_source_ranks_itself_first() {
        let c = ColorCentroids::default();
        let cfg = DescriptorConfig::default();
        let a = Image::from_gray_fn(100, 60, |x, y| ((x * 3 + y) % 200) as u8).to_rgb();
        let b = Image::filled(100, 60, [200, 30, 30]);
        let sources = vec![
            (ClassId(0), describe_image(&a, &cfg, &c).unwrap()),
            (ClassId(1), describe_image(&b, &cfg, &c).unwrap()),
        ];
        let r = classify_similarity(&sources[1].1, &sources).unwrap();
        assert_eq!(r[0].0, ClassId(1));
        assert!((r[0].1 - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ranking_invariant_under_positive_scaling(
            s in prop::collection::vec(0.01f64..1.0, 6),
            k in 0.001f64..1000.0,
        ) {
            let sources: Vec<_> = (0..4)
                .map(|i| (ClassId(i), (0..6).map(|j| ((i * 7 + j * 3) % 5 + 1) as f64).collect()))
                .collect();
            let scaled: Vec<f64> = s.iter().map(|v| v * k).collect();
            let a: Vec<_> = classify_similarity(&s, &sources).unwrap().into_iter().map(|p| p.0).collect();
            let b: Vec<_> = classify_similarity(&scaled, &sources).unwrap().into_iter().map(|p| p.0).collect();
            prop_assert_eq!(a, b);
        }
    }
}
