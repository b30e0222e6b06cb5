//! Identity-document image classification.
//!
//! A keypoint matcher scores a photo against one enrolled source image per class; the
//! match counts are standardized and mapped to probabilities by a logistic model. An OCR
//! keyword matcher scores the same photo from its text. The two top-3 lists are fused by
//! averaging the classes they share.

pub mod calibration;
pub mod evaluation;
pub mod fuzzy;
pub mod fusion;
pub mod imaging;
pub mod keypoints;
pub mod legacy;
pub mod persist;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod textmatch;

use std::fmt;

use serde::{Deserialize, Serialize};

/// Class identifier as written in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type CalibrationModelF64 = calibration::CalibrationModel<f64>;
pub type ConfidenceVectorF64 = fusion::ConfidenceVector<f64>;
pub type ClassifierOutcomeF64 = fusion::ClassifierOutcome<f64>;
pub type FusionDecisionF64 = fusion::FusionDecision<f64>;
pub type ReviewRecordF64 = fusion::ReviewRecord<f64>;
pub type MamdaniSystemF64 = fuzzy::MamdaniSystem<f64>;
pub type ColorDetectorF64 = fuzzy::ColorDetector<f64>;
pub type HsvPixelF64 = imaging::HsvPixel<f64>;
pub type RocReportF64 = evaluation::RocReport<f64>;
