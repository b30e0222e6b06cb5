//! Manifests, configuration, enrollment, classification and corpus runs.

mod classify;
mod corpus;
mod registry;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{
    build_provider, classify_image, classify_path, ClassifyRecord, Engine, LegacyDetail, TextDetail, VisualDetail,
};
pub use corpus::{
    classify_paths, evaluate, export_review_queue, load_records, train_calibration, visual_accuracy, EvaluateSummary,
    RECORDS_FILE,
};
pub use registry::{enroll, EnrollReport, EnrollWarning, Registry, RegistryClass, REGISTRY_SCHEMA};

use crate::calibration::CalibrationError;
use crate::evaluation::EvalError;
use crate::fusion::{FusionError, FusionRule, DEFAULT_REVIEW_THRESHOLD, DEFAULT_TOP_K};
use crate::imaging::{ImagingError, DEFAULT_TARGET};
use crate::keypoints::{FeatureError, SiftConfig, MIN_DIMENSION};
use crate::legacy::{DescriptorConfig, LegacyError};
use crate::persist::{self, PersistError};
use crate::synth::SynthError;
use crate::textmatch::{HttpProviderConfig, TextError};
use crate::ClassId;

pub const MANIFEST_SCHEMA: &str = "idclass.manifest/v1";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const DEFAULT_WORKERS: usize = 4;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid manifest {path}: {reason}")]
    Manifest { path: String, reason: String },
    #[error("class id {0} appears more than once")]
    DuplicateClassId(ClassId),
    #[error("no calibration model at {0}; run train-calibration first")]
    MissingCalibration(String),
    #[error("sample {sample}: class {class} is not enrolled")]
    UnknownClass { sample: String, class: ClassId },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Legacy(#[from] LegacyError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

impl PipelineError {
    /// Bad input as opposed to a failure while running; the CLI maps this to its exit code.
    pub fn is_validation(&self) -> bool {
        use PipelineError::*;
        match self {
            Config(_) | Manifest { .. } | DuplicateClassId(_) | MissingCalibration(_) | UnknownClass { .. } => true,
            Calibration(CalibrationError::InsufficientData { .. } | CalibrationError::SingleClassData) => true,
            Text(TextError::Metadata(_)) => true,
            Eval(EvalError::EmptyInput | EvalError::SingleClassInput) => true,
            Synth(SynthError::InvalidSpec(_) | SynthError::Csv(_)) => true,
            Feature(FeatureError::ImageTooSmall { .. }) | Legacy(LegacyError::ImageTooSmall { .. }) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: ClassId,
    pub name: String,
    /// Relative to the manifest's directory.
    pub source: String,
    /// `[x, y, width, height]` applied to the source before enrollment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<[i64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    /// Keyword metadata file (JSON or CSV), relative to the manifest's directory.
    pub metadata: String,
    pub classes: Vec<ClassEntry>,
}

pub fn load_manifest(path: &Path) -> Result<Manifest, PipelineError> {
    let bad = |reason: String| PipelineError::Manifest {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| PersistError::io(path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if m.schema != MANIFEST_SCHEMA {
        return Err(bad(format!("unsupported schema {:?}", m.schema)));
    }
    if m.classes.len() < 2 {
        return Err(bad("at least two classes are required".into()));
    }
    for (i, c) in m.classes.iter().enumerate() {
        if m.classes[..i].iter().any(|o| o.id == c.id) {
            return Err(PipelineError::DuplicateClassId(c.id));
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// HOG plus SP3 histograms over nearest-centroid colour names.
    HogSp3,
    /// HOG plus SP3 histograms over fuzzy colour names.
    FuzzyColor,
    /// Keypoint matching with calibrated confidences.
    Sift,
    /// Keyword matching on recognized text.
    Ocr,
    /// Top-k fusion of the keypoint and text classifiers.
    #[default]
    Fusion,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::HogSp3, Strategy::FuzzyColor, Strategy::Sift, Strategy::Ocr, Strategy::Fusion];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::HogSp3 => "hog_sp3",
            Strategy::FuzzyColor => "fuzzy_color",
            Strategy::Sift => "sift",
            Strategy::Ocr => "ocr",
            Strategy::Fusion => "fusion",
        }
    }

    pub fn uses_visual(self) -> bool {
        matches!(self, Strategy::Sift | Strategy::Fusion)
    }

    pub fn uses_text(self) -> bool {
        matches!(self, Strategy::Ocr | Strategy::Fusion)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (hog_sp3, fuzzy_color, sift, ocr, fusion)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Fixture,
    Http,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Fixture file; when unset, `ocr_fixtures.json` next to the labels file or image.
    pub fixtures: Option<PathBuf>,
    pub http: HttpProviderConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub resize: [u32; 2],
    pub matcher_ratio: f32,
    pub top_k: usize,
    pub fusion_rule: FusionRule,
    pub review_threshold: f64,
    pub strategy: Strategy,
    pub sift: SiftConfig,
    pub descriptor: DescriptorConfig,
    /// Worker threads for batch classification.
    pub workers: usize,
    pub provider: ProviderConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            resize: [DEFAULT_TARGET.0, DEFAULT_TARGET.1],
            matcher_ratio: 0.75,
            top_k: DEFAULT_TOP_K,
            fusion_rule: FusionRule::Mean,
            review_threshold: DEFAULT_REVIEW_THRESHOLD,
            strategy: Strategy::Fusion,
            sift: SiftConfig::default(),
            descriptor: DescriptorConfig::default(),
            workers: DEFAULT_WORKERS,
            provider: ProviderConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: &str| Err(PipelineError::Config(m.into()));
        let min = MIN_DIMENSION as u32;
        if self.resize[0] < min || self.resize[1] < min {
            return fail("resize sides must be at least 16 pixels");
        }
        if !(self.matcher_ratio > 0.0 && self.matcher_ratio <= 1.0) {
            return fail("matcher_ratio must be in (0, 1]");
        }
        if self.top_k == 0 {
            return fail("top_k must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.review_threshold) {
            return fail("review_threshold must be in [0, 1]");
        }
        if self.workers == 0 {
            return fail("workers must be at least 1");
        }
        let s = &self.sift;
        if !(s.sigma0 > 0.0 && s.assumed_blur >= 0.0 && s.assumed_blur < s.sigma0) {
            return fail("sift.sigma0 must be positive and above sift.assumed_blur");
        }
        if s.scales_per_octave == 0 || !(s.contrast_threshold >= 0.0) || !(s.edge_threshold > 1.0) {
            return fail("sift thresholds out of range");
        }
        if !(s.descriptor_clip > 0.0 && s.descriptor_clip <= 1.0) {
            return fail("sift.descriptor_clip must be in (0, 1]");
        }
        let d = &self.descriptor;
        if d.hog.is_none() && !d.sp3 {
            return fail("descriptor needs hog, sp3 or both");
        }
        if let Some(h) = &d.hog {
            if h.cell_size == 0 || h.block_cells == 0 || h.bins == 0 {
                return fail("descriptor.hog sizes must be positive");
            }
        }
        if !(d.hog_weight >= 0.0 && d.color_weight >= 0.0) {
            return fail("descriptor weights must be non-negative");
        }
        if self.provider.kind == ProviderKind::Http && self.provider.http.endpoint.is_empty() {
            return fail("provider.http.endpoint is required for the http provider");
        }
        Ok(())
    }

    /// Reads a JSON config; relative fixture paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PersistError::io(path, e))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if let (Some(f), Some(dir)) = (&cfg.provider.fixtures, path.parent()) {
            if f.is_relative() {
                cfg.provider.fixtures = Some(dir.join(f));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        persist::write_json_atomic(path, self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        cfg.save(&p).unwrap();
        assert_eq!(PipelineConfig::load(&p).unwrap(), cfg);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"strategy": "sift", "top_k": 5, "provider": {"fixtures": "ocr.json"}}"#).unwrap();
        let cfg = PipelineConfig::load(&p).unwrap();
        assert_eq!((cfg.strategy, cfg.top_k, cfg.resize), (Strategy::Sift, 5, [425, 270]));
        assert_eq!(cfg.provider.fixtures, Some(dir.path().join("ocr.json")));
    }

    #[test]
    fn bad_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        for body in [
            r#"{"top_k": 0}"#,
            r#"{"matcher_ratio": 1.5}"#,
            r#"{"resize": [8, 270]}"#,
            r#"{"strategy": "magic"}"#,
            r#"{"unknown_field": 1}"#,
            r#"{"provider": {"kind": "http"}}"#,
        ] {
            std::fs::write(&p, body).unwrap();
            let e = PipelineConfig::load(&p).unwrap_err();
            assert!(e.is_validation(), "{body}: {e}");
        }
    }

    #[test]
    fn manifest_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let body = |ids: &[u32]| {
            let classes: Vec<ClassEntry> = ids
                .iter()
                .map(|&i| ClassEntry { id: ClassId(i), name: format!("c{i}"), source: format!("{i}.png"), crop: None })
                .collect();
            serde_json::to_string(&Manifest { schema: MANIFEST_SCHEMA.into(), metadata: "k.json".into(), classes }).unwrap()
        };
        std::fs::write(&p, body(&[1, 2])).unwrap();
        assert_eq!(load_manifest(&p).unwrap().classes.len(), 2);
        std::fs::write(&p, body(&[1, 2, 1])).unwrap();
        assert!(matches!(load_manifest(&p), Err(PipelineError::DuplicateClassId(ClassId(1)))));
        std::fs::write(&p, body(&[1])).unwrap();
        assert!(matches!(load_manifest(&p), Err(PipelineError::Manifest { .. })));
        assert!(matches!(load_manifest(&dir.path().join("none.json")), Err(PipelineError::Persist(_))));
    }
}
