use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::registry::Registry;
use super::{PipelineConfig, PipelineError, ProviderConfig, ProviderKind, Strategy};
use crate::calibration::{
    load_model, predict_confidence, z_scores, CalibrationError, CalibrationModel, MatchScoreVector,
};
use crate::fusion::{
    fuse_with, ClassScore, ClassifierKind, ClassifierOutcome, ConfidenceVector, FlagReason, FusedEntry,
};
use crate::imaging::{load_image, resize, Image};
use crate::keypoints::{extract_features, score_against_classes};
use crate::legacy::{classify_similarity, describe_image, ColorCentroids, ColorNamer};
use crate::fuzzy::ColorDetector;
use crate::synth::OCR_FIXTURES_FILE;
use crate::textmatch::{classify_text, extract_text, FixtureProvider, HttpProvider, TextProvider};
use crate::ClassId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualDetail {
    pub keypoints: usize,
    pub raw_scores: Vec<(ClassId, u32)>,
    pub z_scores: Vec<(ClassId, f64)>,
    pub confidences: Vec<(ClassId, f64)>,
    pub top: Vec<(ClassId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextDetail {
    pub provider: String,
    pub words: Vec<String>,
    pub confidences: Vec<(ClassId, f64)>,
    pub top: Vec<(ClassId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegacyDetail {
    /// Cosine similarity to each source, best first.
    pub similarities: Vec<(ClassId, f64)>,
}

/// Decision plus every intermediate score for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRecord {
    pub sample_id: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_class: Option<ClassId>,
    pub predicted: ClassId,
    pub confidence: f64,
    pub flagged: bool,
    pub flag_reason: Option<FlagReason>,
    /// Score of every enrolled class under the strategy, in registry order.
    pub class_scores: Vec<(ClassId, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual: Option<VisualDetail>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<TextDetail>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legacy: Option<LegacyDetail>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fused: Option<Vec<FusedEntry<f64>>>,
}

/// Builds the configured text provider. Without an explicit fixture path the first
/// `ocr_fixtures.json` found in `search_dirs` is used.
pub fn build_provider(cfg: &ProviderConfig, search_dirs: &[&Path]) -> Result<Box<dyn TextProvider>, PipelineError> {
    match cfg.kind {
        ProviderKind::Http => Ok(Box::new(HttpProvider::new(cfg.http.clone()))),
        ProviderKind::Fixture => {
            let path = match &cfg.fixtures {
                Some(p) => p.clone(),
                None => search_dirs
                    .iter()
                    .map(|d| d.join(OCR_FIXTURES_FILE))
                    .find(|p| p.exists())
                    .ok_or_else(|| {
                        PipelineError::Config("no OCR fixture file configured or found next to the input".into())
                    })?,
            };
            Ok(Box::new(FixtureProvider::load(&path)?))
        }
    }
}

/// A loaded registry with its calibration model and text provider.
/// Legacy descriptor of every source, computed on first use.
type SourceDescriptors = OnceLock<Result<Vec<(ClassId, Vec<f64>)>, String>>;

pub struct Engine {
    registry: Registry,
    config: PipelineConfig,
    calibration: Option<CalibrationModel<f64>>,
    provider: Option<Box<dyn TextProvider>>,
    centroids: ColorCentroids,
    fuzzy: ColorDetector<f64>,
    hog_sp3_sources: SourceDescriptors,
    fuzzy_sources: SourceDescriptors,
}

impl Engine {
    /// Loads `calibration.json` from the registry if present.
    pub fn new(registry: Registry, config: PipelineConfig, provider: Option<Box<dyn TextProvider>>) -> Result<Self, PipelineError> {
        config.validate()?;
        if registry.resize != config.resize {
            log::warn!(
                "registry was enrolled at {:?}, config asks for {:?}; using the registry size",
                registry.resize,
                config.resize
            );
        }
        let path = registry.calibration_path();
        let calibration = if path.exists() { Some(load_model(&path)?) } else { None };
        Ok(Engine {
            registry,
            config,
            calibration,
            provider,
            centroids: ColorCentroids::default(),
            fuzzy: ColorDetector::default(),
            hog_sp3_sources: OnceLock::new(),
            fuzzy_sources: OnceLock::new(),
        })
    }

    pub fn with_calibration(mut self, model: Option<CalibrationModel<f64>>) -> Self {
        self.calibration = model;
        self
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn calibration(&self) -> Option<&CalibrationModel<f64>> {
        self.calibration.as_ref()
    }

    /// Raw match counts of `img` against every enrolled class, plus its keypoint count.
    pub fn visual_scores(&self, img: &Image) -> Result<(MatchScoreVector, usize), PipelineError> {
        let [w, h] = self.registry.resize;
        let feats = extract_features(&resize(img, w, h), &self.registry.sift)?;
        let scores = score_against_classes(&feats, &self.registry.features, self.config.matcher_ratio);
        Ok((scores, feats.len()))
    }

    /// Index of the class with the most matches; ties go to the earlier class.
    pub fn visual_top1(&self, img: &Image) -> Result<ClassId, PipelineError> {
        let (scores, _) = self.visual_scores(img)?;
        let i = scores.argmax().unwrap_or(0);
        Ok(self.registry.classes[i].id)
    }

    fn ids(&self) -> Vec<ClassId> {
        self.registry.class_ids()
    }

    fn visual(&self, img: &Image) -> Result<(ConfidenceVector<f64>, VisualDetail), PipelineError> {
        let model = self
            .calibration
            .as_ref()
            .ok_or_else(|| PipelineError::MissingCalibration(self.registry.calibration_path().display().to_string()))?;
        let (raw, keypoints) = self.visual_scores(img)?;
        let z = match z_scores::<f64>(&raw) {
            Ok(z) => z,
            Err(CalibrationError::DegenerateDistribution) => {
                log::warn!("all classes matched equally; visual scores carry no information");
                vec![0.0; raw.len()]
            }
            Err(e) => return Err(e.into()),
        };
        let ids = self.ids();
        let conf: Vec<f64> = z.iter().map(|&v| predict_confidence(model, v)).collect();
        let cv = ConfidenceVector::new(
            ids.iter()
                .zip(&conf)
                .zip(raw.scores())
                .map(|((&class, &confidence), &support)| ClassScore { class, confidence, support })
                .collect(),
        );
        let top = cv.top_k(ClassifierKind::Visual, self.config.top_k).top;
        let detail = VisualDetail {
            keypoints,
            raw_scores: ids.iter().copied().zip(raw.scores().iter().copied()).collect(),
            z_scores: ids.iter().copied().zip(z).collect(),
            confidences: ids.iter().copied().zip(conf).collect(),
            top,
        };
        Ok((cv, detail))
    }

    fn text(&self, img: &Image) -> Result<(ConfidenceVector<f64>, TextDetail), PipelineError> {
        let provider = self
            .provider
            .as_deref()
            .ok_or_else(|| PipelineError::Config("this strategy needs a text provider".into()))?;
        let extracted = extract_text(img, provider)?;
        let cv = classify_text::<f64>(&extracted, &self.registry.metadata);
        // classes without a single matched keyword are not candidates
        let top = cv
            .top_k(ClassifierKind::Text, self.config.top_k)
            .top
            .into_iter()
            .filter(|&(_, p)| p > 0.0)
            .collect();
        let detail = TextDetail {
            provider: extracted.provider,
            words: extracted.words,
            confidences: cv.entries.iter().map(|e| (e.class, e.confidence)).collect(),
            top,
        };
        Ok((cv, detail))
    }

    fn legacy_sources(&self, fuzzy: bool) -> Result<&[(ClassId, Vec<f64>)], PipelineError> {
        let (cell, namer): (_, &dyn ColorNamer) = if fuzzy {
            (&self.fuzzy_sources, &self.fuzzy)
        } else {
            (&self.hog_sp3_sources, &self.centroids)
        };
        let r = cell.get_or_init(|| {
            (0..self.registry.classes.len())
                .map(|i| {
                    let img = self.registry.source_image(i).map_err(|e| e.to_string())?;
                    let d = describe_image(&img, &self.config.descriptor, namer).map_err(|e| e.to_string())?;
                    Ok((self.registry.classes[i].id, d))
                })
                .collect()
        });
        r.as_deref().map_err(|e| PipelineError::Config(format!("cannot describe enrolled sources: {e}")))
    }

    fn legacy(&self, img: &Image, fuzzy: bool) -> Result<LegacyDetail, PipelineError> {
        let sources = self.legacy_sources(fuzzy)?;
        let namer: &dyn ColorNamer = if fuzzy { &self.fuzzy } else { &self.centroids };
        let d = describe_image(img, &self.config.descriptor, namer)?;
        Ok(LegacyDetail {
            similarities: classify_similarity(&d, sources)?,
        })
    }

    /// Runs `strategy` on one image.
    pub fn classify(&self, img: &Image, sample_id: &str, strategy: Strategy) -> Result<ClassifyRecord, PipelineError> {
        let threshold = self.config.review_threshold;
        let ids = self.ids();
        let low = |c: f64| (c < threshold).then_some(FlagReason::LowConfidence);
        let mut rec = ClassifyRecord {
            sample_id: sample_id.to_string(),
            strategy,
            true_class: None,
            predicted: ids[0],
            confidence: 0.0,
            flagged: false,
            flag_reason: None,
            class_scores: Vec::new(),
            visual: None,
            text: None,
            legacy: None,
            fused: None,
        };
        match strategy {
            Strategy::HogSp3 | Strategy::FuzzyColor => {
                let detail = self.legacy(img, strategy == Strategy::FuzzyColor)?;
                let (best, sim) = detail.similarities[0];
                rec.predicted = best;
                rec.confidence = sim.clamp(0.0, 1.0);
                rec.flag_reason = low(rec.confidence);
                rec.class_scores = ids
                    .iter()
                    .map(|&c| {
                        let s = detail.similarities.iter().find(|e| e.0 == c).map_or(0.0, |e| e.1);
                        (c, s.clamp(0.0, 1.0))
                    })
                    .collect();
                rec.legacy = Some(detail);
            }
            Strategy::Sift => {
                let (cv, detail) = self.visual(img)?;
                let best = cv.ranked()[0];
                rec.predicted = best.class;
                rec.confidence = best.confidence;
                rec.flag_reason = low(best.confidence);
                rec.class_scores = detail.confidences.clone();
                rec.visual = Some(detail);
            }
            Strategy::Ocr => {
                let (cv, detail) = self.text(img)?;
                let best = cv.ranked()[0];
                rec.predicted = best.class;
                rec.confidence = best.confidence;
                rec.flag_reason = low(best.confidence);
                rec.class_scores = detail.confidences.clone();
                rec.text = Some(detail);
            }
            Strategy::Fusion => {
                let (_, vd) = self.visual(img)?;
                let (_, td) = self.text(img)?;
                let visual = ClassifierOutcome::new(ClassifierKind::Visual, vd.top.clone());
                if td.top.is_empty() {
                    // no keyword matched at all: keep the visual answer but send it to review
                    let (c, p) = visual.top[0];
                    rec.predicted = c;
                    rec.confidence = p;
                    rec.flag_reason = Some(FlagReason::NoCommonClass);
                    rec.class_scores = ids.iter().map(|&k| (k, if k == c { p } else { 0.0 })).collect();
                    rec.fused = Some(Vec::new());
                } else {
                    let text = ClassifierOutcome::new(ClassifierKind::Text, td.top.clone());
                    let d = fuse_with(&visual, &text, threshold, self.config.fusion_rule)?;
                    rec.predicted = d.chosen;
                    rec.confidence = d.chosen_confidence;
                    rec.flag_reason = d.flag_reason;
                    rec.class_scores = ids
                        .iter()
                        .map(|&k| {
                            let fused = d.fused.iter().find(|f| f.class == k).and_then(|f| f.combined);
                            let s = match fused {
                                Some(v) => v,
                                None if k == d.chosen => d.chosen_confidence,
                                None => 0.0,
                            };
                            (k, s)
                        })
                        .collect();
                    rec.fused = Some(d.fused);
                }
                rec.visual = Some(vd);
                rec.text = Some(td);
            }
        }
        rec.flagged = rec.flag_reason.is_some();
        Ok(rec)
    }
}

pub fn classify_image(engine: &Engine, img: &Image, sample_id: &str) -> Result<ClassifyRecord, PipelineError> {
    engine.classify(img, sample_id, engine.config().strategy)
}

pub fn classify_path(engine: &Engine, path: &Path) -> Result<ClassifyRecord, PipelineError> {
    let img = load_image(path)?;
    let id = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    classify_image(engine, &img, &id)
}
