//! Confidence calibration for raw match counts.
//!
//! Each sample's per-class match counts are standardized against their own population
//! mean and standard deviation, and a single logistic model maps a class's z-score to the
//! probability that it is the true class. One model is shared by all classes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::persist::{self, PersistError};
use crate::scalar::Scalar;

pub const MODEL_SCHEMA: &str = "idclass.calibration/v1";
pub const MIN_TRAINING_SAMPLES: usize = 10;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("all scores are equal; the standard deviation is zero")]
    DegenerateDistribution,
    #[error("need at least 2 class scores, got {0}")]
    TooFewClasses(usize),
    #[error("need at least {min} training samples, got {got}")]
    InsufficientData { got: usize, min: usize },
    #[error("training data contains only one label")]
    SingleClassData,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("invalid model file: {0}")]
    Schema(String),
}

/// Raw match counts of one sample against every enrolled class, in manifest order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchScoreVector {
    scores: Vec<u32>,
}

impl MatchScoreVector {
    pub fn new(scores: Vec<u32>) -> Self {
        MatchScoreVector { scores }
    }

    pub fn scores(&self) -> &[u32] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Index of the highest count; the earliest index wins ties.
    pub fn argmax(&self) -> Option<usize> {
        argmax_by(&self.scores, |a, b| a > b)
    }
}

fn argmax_by<T: Copy>(v: &[T], greater: impl Fn(T, T) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        match best {
            Some(b) if !greater(x, v[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Standardize with the population mean and standard deviation of the vector itself.
pub fn z_scores<T: Scalar>(v: &MatchScoreVector) -> Result<Vec<T>, CalibrationError> {
    standardize(&v.scores.iter().map(|&s| T::from_u32(s).unwrap()).collect::<Vec<T>>())
}

/// [`z_scores`] on arbitrary reals.
pub fn standardize<T: Scalar>(x: &[T]) -> Result<Vec<T>, CalibrationError> {
    if x.len() < 2 {
        return Err(CalibrationError::TooFewClasses(x.len()));
    }
    let n = T::from_usize_lossy(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let sd = var.sqrt();
    // relative cutoff: rounding leaves a spread of a few ulps on equal inputs
    if !(sd > mean.abs() * T::epsilon() * T::lit(4.0)) {
        return Err(CalibrationError::DegenerateDistribution);
    }
    Ok(x.iter().map(|&v| (v - mean) / sd).collect())
}

/// Index of the largest z-score; earliest wins ties.
pub fn argmax_z<T: Scalar>(z: &[T]) -> Option<usize> {
    argmax_by(z, |a, b| a > b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    /// Stop once the loss changes by less than this between epochs.
    pub tolerance: f64,
    pub max_epochs: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            learning_rate: 0.1,
            tolerance: 1e-8,
            max_epochs: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationModel<T> {
    pub w: T,
    pub b: T,
    pub trained_on: usize,
    pub epochs: usize,
    pub final_loss: T,
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Mean negative log-likelihood of labels under `sigmoid(w z + b)`.
pub fn log_loss<T: Scalar>(w: T, b: T, samples: &[(T, bool)]) -> T {
    let n = T::from_usize_lossy(samples.len());
    samples
        .iter()
        .map(|&(z, y)| {
            let x = w * z + b;
            if y {
                softplus(-x)
            } else {
                softplus(x)
            }
        })
        .sum::<T>()
        / n
}

/// Gradient of [`log_loss`] with respect to `(w, b)`.
pub fn log_loss_gradient<T: Scalar>(w: T, b: T, samples: &[(T, bool)]) -> (T, T) {
    let n = T::from_usize_lossy(samples.len());
    let (mut gw, mut gb) = (T::zero(), T::zero());
    for &(z, y) in samples {
        let r = sigmoid(w * z + b) - if y { T::one() } else { T::zero() };
        gw = gw + r * z;
        gb = gb + r;
    }
    (gw / n, gb / n)
}

pub fn fit_logistic<T: Scalar>(samples: &[(T, bool)]) -> Result<CalibrationModel<T>, CalibrationError> {
    fit_logistic_with(samples, &LogisticConfig::default())
}

/// Full-batch gradient descent from `w = b = 0`.
pub fn fit_logistic_with<T: Scalar>(
    samples: &[(T, bool)],
    config: &LogisticConfig,
) -> Result<CalibrationModel<T>, CalibrationError> {
    if samples.len() < MIN_TRAINING_SAMPLES {
        return Err(CalibrationError::InsufficientData {
            got: samples.len(),
            min: MIN_TRAINING_SAMPLES,
        });
    }
    let positives = samples.iter().filter(|s| s.1).count();
    if positives == 0 || positives == samples.len() {
        return Err(CalibrationError::SingleClassData);
    }
    if samples.iter().any(|s| !s.0.is_finite()) {
        return Err(CalibrationError::NonFinite("training z-scores"));
    }
    let lr = T::lit(config.learning_rate);
    let tol = T::lit(config.tolerance);
    let (mut w, mut b) = (T::zero(), T::zero());
    let mut loss = log_loss(w, b, samples);
    let mut epochs = 0;
    while epochs < config.max_epochs {
        let (gw, gb) = log_loss_gradient(w, b, samples);
        w = w - lr * gw;
        b = b - lr * gb;
        epochs += 1;
        let next = log_loss(w, b, samples);
        let delta = (loss - next).abs();
        loss = next;
        if delta < tol {
            break;
        }
    }
    log::debug!("logistic fit: w={w} b={b} loss={loss} after {epochs} epochs");
    Ok(CalibrationModel {
        w,
        b,
        trained_on: samples.len(),
        epochs,
        final_loss: loss,
    })
}

pub fn predict_confidence<T: Scalar>(m: &CalibrationModel<T>, z: T) -> T {
    sigmoid(m.w * z + m.b)
}

/// `(z, is_true_class)` pairs contributed by one classified sample.
pub fn training_pairs<T: Scalar>(
    scores: &MatchScoreVector,
    true_index: usize,
) -> Result<Vec<(T, bool)>, CalibrationError> {
    let z = z_scores::<T>(scores)?;
    Ok(z.into_iter()
        .enumerate()
        .map(|(i, v)| (v, i == true_index))
        .collect())
}

#[derive(Serialize)]
struct ModelFileOut<'a> {
    schema_version: &'a str,
    w: Box<RawValue>,
    b: Box<RawValue>,
    trained_on: usize,
    epochs: usize,
    final_loss: Box<RawValue>,
}

#[derive(Deserialize)]
struct ModelFileIn {
    schema_version: String,
    w: f64,
    b: f64,
    trained_on: usize,
    epochs: usize,
    final_loss: f64,
}

/// 17 significant digits: enough to round-trip any `f64`.
fn exact_number(v: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{v:.16e}")).expect("finite float is valid JSON")
}

pub fn save_model<T: Scalar>(m: &CalibrationModel<T>, path: &Path) -> Result<(), CalibrationError> {
    let vals = [m.w, m.b, m.final_loss].map(Scalar::to_f64_lossy);
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(CalibrationError::NonFinite("model parameters"));
    }
    let file = ModelFileOut {
        schema_version: MODEL_SCHEMA,
        w: exact_number(vals[0]),
        b: exact_number(vals[1]),
        trained_on: m.trained_on,
        epochs: m.epochs,
        final_loss: exact_number(vals[2]),
    };
    persist::write_json_atomic(path, &file)?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<CalibrationModel<T>, CalibrationError> {
    let bytes = std::fs::read(path).map_err(|e| PersistError::io(path, e))?;
    let file: ModelFileIn =
        serde_json::from_slice(&bytes).map_err(|e| CalibrationError::Schema(e.to_string()))?;
    if file.schema_version != MODEL_SCHEMA {
        return Err(CalibrationError::Schema(format!(
            "unsupported schema_version {:?}",
            file.schema_version
        )));
    }
    if ![file.w, file.b, file.final_loss].iter().all(|v| v.is_finite()) {
        return Err(CalibrationError::NonFinite("model file"));
    }
    let conv = |v: f64| T::from_f64(v).ok_or(CalibrationError::NonFinite("model file"));
    Ok(CalibrationModel {
        w: conv(file.w)?,
        b: conv(file.b)?,
        trained_on: file.trained_on,
        epochs: file.epochs,
        final_loss: conv(file.final_loss)?,
    })
}
