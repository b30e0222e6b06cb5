//! Decision fusion of the visual and text classifiers.
//!
//! Each classifier contributes its three most confident classes. Classes present in both
//! lists are scored by the mean (or, as a variant, the minimum) of the two confidences and
//! the best one wins; a class missing from either list is not a candidate. When the lists
//! share no class, the single most confident entry is chosen and flagged for review.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persist::{self, PersistError};
use crate::scalar::Scalar;
use crate::ClassId;

pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_REVIEW_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("{0:?} outcome is empty")]
    EmptyOutcome(ClassifierKind),
    #[error("{0:?} outcome is malformed: {1}")]
    InvalidOutcome(ClassifierKind, String),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Visual,
    Text,
}

/// One class's confidence plus the evidence count used to order equal confidences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore<T> {
    pub class: ClassId,
    pub confidence: T,
    /// Raw match count (visual) or matched keyword count (text).
    pub support: u32,
}

/// Per-class confidences from one classifier, in manifest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceVector<T> {
    pub entries: Vec<ClassScore<T>>,
}

impl<T: Scalar> ConfidenceVector<T> {
    pub fn new(entries: Vec<ClassScore<T>>) -> Self {
        ConfidenceVector { entries }
    }

    /// Entries sorted by confidence, then support, then manifest order.
    pub fn ranked(&self) -> Vec<ClassScore<T>> {
        let mut v = self.entries.clone();
        v.sort_by(|a, b| {
            b.confidence
                .partial_cmp(&a.confidence)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.support.cmp(&a.support))
        });
        v
    }

    pub fn top_k(&self, kind: ClassifierKind, k: usize) -> ClassifierOutcome<T> {
        ClassifierOutcome {
            classifier: kind,
            top: self
                .ranked()
                .into_iter()
                .take(k)
                .map(|s| (s.class, s.confidence))
                .collect(),
        }
    }

    pub fn confidence_of(&self, class: ClassId) -> Option<T> {
        self.entries.iter().find(|e| e.class == class).map(|e| e.confidence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutcome<T> {
    pub classifier: ClassifierKind,
    /// Best first.
    pub top: Vec<(ClassId, T)>,
}

impl<T: Scalar> ClassifierOutcome<T> {
    pub fn new(classifier: ClassifierKind, top: Vec<(ClassId, T)>) -> Self {
        ClassifierOutcome { classifier, top }
    }

    fn validate(&self) -> Result<(), FusionError> {
        let kind = self.classifier;
        if self.top.is_empty() {
            return Err(FusionError::EmptyOutcome(kind));
        }
        for (i, &(c, p)) in self.top.iter().enumerate() {
            if !(p >= T::zero() && p <= T::one()) {
                return Err(FusionError::InvalidOutcome(kind, format!("confidence {p} of class {c}")));
            }
            if self.top[..i].iter().any(|e| e.0 == c) {
                return Err(FusionError::InvalidOutcome(kind, format!("class {c} listed twice")));
            }
            if i > 0 && p > self.top[i - 1].1 {
                return Err(FusionError::InvalidOutcome(kind, "confidences not sorted".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionRule {
    #[default]
    Mean,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagReason {
    NoCommonClass,
    LowConfidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedEntry<T> {
    pub class: ClassId,
    /// `None` when the class is missing from one of the two lists.
    pub combined: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionDecision<T> {
    pub rule: FusionRule,
    /// Visual classes first, then text-only classes, each in list order.
    pub fused: Vec<FusedEntry<T>>,
    pub chosen: ClassId,
    pub chosen_confidence: T,
    pub flagged: bool,
    pub flag_reason: Option<FlagReason>,
}

/// Mean rule with review threshold `threshold`.
pub fn fuse<T: Scalar>(
    visual: &ClassifierOutcome<T>,
    text: &ClassifierOutcome<T>,
    threshold: T,
) -> Result<FusionDecision<T>, FusionError> {
    fuse_with(visual, text, threshold, FusionRule::Mean)
}

pub fn min_fuse<T: Scalar>(
    visual: &ClassifierOutcome<T>,
    text: &ClassifierOutcome<T>,
    threshold: T,
) -> Result<FusionDecision<T>, FusionError> {
    fuse_with(visual, text, threshold, FusionRule::Min)
}

/// `true` if `a` beats `b`; equal values go to the smaller class id so that swapping the
/// two classifiers never changes the result.
fn better<T: Scalar>(a: (ClassId, T), b: (ClassId, T)) -> bool {
    a.1 > b.1 || (a.1 == b.1 && a.0 < b.0)
}

pub fn fuse_with<T: Scalar>(
    visual: &ClassifierOutcome<T>,
    text: &ClassifierOutcome<T>,
    threshold: T,
    rule: FusionRule,
) -> Result<FusionDecision<T>, FusionError> {
    visual.validate()?;
    text.validate()?;
    let lookup = |o: &ClassifierOutcome<T>, c: ClassId| o.top.iter().find(|e| e.0 == c).map(|e| e.1);
    let mut fused = Vec::new();
    for &(c, _) in visual.top.iter().chain(&text.top) {
        if fused.iter().any(|f: &FusedEntry<T>| f.class == c) {
            continue;
        }
        let combined = match (lookup(visual, c), lookup(text, c)) {
            (Some(p), Some(q)) => Some(match rule {
                FusionRule::Mean => (p + q) / T::lit(2.0),
                FusionRule::Min => p.min(q),
            }),
            _ => None,
        };
        fused.push(FusedEntry { class: c, combined });
    }
    let mut best: Option<(ClassId, T)> = None;
    for f in &fused {
        if let Some(v) = f.combined {
            if best.is_none_or(|b| better((f.class, v), b)) {
                best = Some((f.class, v));
            }
        }
    }
    let (chosen, chosen_confidence, flag_reason) = match best {
        Some((c, v)) => (c, v, (v < threshold).then_some(FlagReason::LowConfidence)),
        None => {
            let mut top = visual.top[0];
            for &e in visual.top.iter().chain(&text.top) {
                if better(e, top) {
                    top = e;
                }
            }
            (top.0, top.1, Some(FlagReason::NoCommonClass))
        }
    };
    Ok(FusionDecision {
        rule,
        fused,
        chosen,
        chosen_confidence,
        flagged: flag_reason.is_some(),
        flag_reason,
    })
}

pub fn flag_for_review<T>(d: &FusionDecision<T>) -> bool {
    d.flagged
}

/// One line of the review queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord<T> {
    pub sample_id: String,
    pub visual: Vec<(ClassId, T)>,
    pub text: Vec<(ClassId, T)>,
    pub fused: Vec<FusedEntry<T>>,
    pub chosen: ClassId,
    pub chosen_confidence: T,
    pub flag_reason: Option<FlagReason>,
}

impl<T: Scalar> ReviewRecord<T> {
    pub fn new(
        sample_id: &str,
        visual: &ClassifierOutcome<T>,
        text: &ClassifierOutcome<T>,
        d: &FusionDecision<T>,
    ) -> Self {
        ReviewRecord {
            sample_id: sample_id.to_string(),
            visual: visual.top.clone(),
            text: text.top.clone(),
            fused: d.fused.clone(),
            chosen: d.chosen,
            chosen_confidence: d.chosen_confidence,
            flag_reason: d.flag_reason,
        }
    }
}

/// Write records as JSON lines.
pub fn write_review_queue<T: Scalar>(path: &Path, records: &[ReviewRecord<T>]) -> Result<(), FusionError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("review record serializes");
        buf.write_all(b"\n").expect("write to Vec");
    }
    persist::write_atomic(path, &buf)?;
    Ok(())
}
