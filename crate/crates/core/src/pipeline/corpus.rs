use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::classify::{build_provider, classify_path, ClassifyRecord, Engine};
use super::registry::Registry;
use super::{PipelineConfig, PipelineError, Strategy};
use crate::calibration::{fit_logistic, save_model, training_pairs, CalibrationError, CalibrationModel, MIN_TRAINING_SAMPLES};
use crate::evaluation::{build_report, write_report_files, BinaryOutcome, EvaluationReport, SampleDecision};
use crate::fusion::{write_review_queue, ReviewRecord};
use crate::imaging::load_image;
use crate::persist::{self, PersistError};
use crate::synth::{read_labels, LabelRow};
use crate::ClassId;

pub const RECORDS_FILE: &str = "records.jsonl";

fn labeled_samples(labels: &Path, registry: &Registry) -> Result<Vec<(LabelRow, PathBuf)>, PipelineError> {
    let base = labels.parent().unwrap_or(Path::new("."));
    let rows = read_labels(labels)?;
    rows.into_iter()
        .map(|r| {
            if registry.index_of(r.class_id).is_none() {
                return Err(PipelineError::UnknownClass {
                    sample: r.sample_id.clone(),
                    class: r.class_id,
                });
            }
            let p = base.join(&r.path);
            Ok((r, p))
        })
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))
}

/// Scores every labeled sample against the registry, fits the logistic calibration on the
/// resulting `(z, is_true_class)` pairs and writes it into the registry directory.
pub fn train_calibration(
    registry_dir: &Path,
    labels: &Path,
    cfg: &PipelineConfig,
) -> Result<CalibrationModel<f64>, PipelineError> {
    let registry = Registry::load(registry_dir)?;
    let samples = labeled_samples(labels, &registry)?;
    if samples.len() < MIN_TRAINING_SAMPLES {
        return Err(CalibrationError::InsufficientData {
            got: samples.len(),
            min: MIN_TRAINING_SAMPLES,
        }
        .into());
    }
    if samples.iter().map(|(r, _)| r.class_id).collect::<BTreeSet<_>>().len() < 2 {
        return Err(CalibrationError::SingleClassData.into());
    }
    let engine = Engine::new(registry, cfg.clone(), None)?.with_calibration(None);
    let per_sample: Vec<Result<Vec<(f64, bool)>, PipelineError>> = pool(cfg.workers)?.install(|| {
        samples
            .par_iter()
            .map(|(row, path)| {
                let img = load_image(path)?;
                let (scores, _) = engine.visual_scores(&img)?;
                let truth = engine.registry().index_of(row.class_id).expect("checked above");
                match training_pairs(&scores, truth) {
                    Ok(p) => Ok(p),
                    Err(CalibrationError::DegenerateDistribution) => {
                        log::warn!("sample {}: equal match counts for every class, skipped", row.sample_id);
                        Ok(Vec::new())
                    }
                    Err(e) => Err(e.into()),
                }
            })
            .collect()
    });
    let mut pairs = Vec::new();
    for p in per_sample {
        pairs.extend(p?);
    }
    let model = fit_logistic(&pairs)?;
    log::info!(
        "calibration fitted on {} pairs: w={:.6} b={:.6} loss={:.6}",
        model.trained_on,
        model.w,
        model.b,
        model.final_loss
    );
    save_model(&model, &engine.registry().calibration_path())?;
    Ok(model)
}

fn run_corpus(engine: &Engine, samples: &[(LabelRow, PathBuf)], strategy: Strategy) -> Result<Vec<ClassifyRecord>, PipelineError> {
    pool(engine.config().workers)?.install(|| {
        samples
            .par_iter()
            .map(|(row, path)| {
                let img = load_image(path)?;
                let mut rec = engine.classify(&img, &row.sample_id, strategy)?;
                rec.true_class = Some(row.class_id);
                Ok(rec)
            })
            .collect()
    })
}

pub struct EvaluateSummary {
    pub report: EvaluationReport,
    pub records: Vec<ClassifyRecord>,
}

/// Classifies a labeled corpus and writes `report.json`, `decisions.csv`, `roc.csv`,
/// `roc.svg` and one JSON line per sample into `out_dir`.
pub fn evaluate(
    registry_dir: &Path,
    labels: &Path,
    cfg: &PipelineConfig,
    strategy: Strategy,
    out_dir: &Path,
) -> Result<EvaluateSummary, PipelineError> {
    let registry = Registry::load(registry_dir)?;
    let samples = labeled_samples(labels, &registry)?;
    let provider = if strategy.uses_text() {
        let base = labels.parent().unwrap_or(Path::new("."));
        Some(build_provider(&cfg.provider, &[base])?)
    } else {
        None
    };
    let engine = Engine::new(registry, cfg.clone(), provider)?;
    let records = run_corpus(&engine, &samples, strategy)?;

    let decisions: Vec<SampleDecision> = records
        .iter()
        .map(|r| SampleDecision {
            sample_id: r.sample_id.clone(),
            true_class: r.true_class.expect("set by run_corpus"),
            predicted: r.predicted,
            confidence: r.confidence,
            flagged: r.flagged,
        })
        .collect();
    let outcomes: Vec<BinaryOutcome<f64>> = records
        .iter()
        .flat_map(|r| {
            let truth = r.true_class;
            r.class_scores.iter().map(move |&(c, score)| BinaryOutcome {
                score,
                label: Some(c) == truth,
            })
        })
        .collect();
    let ids: Vec<ClassId> = engine.registry().class_ids();
    let report = build_report(strategy.name(), &ids, &decisions, &outcomes)?;

    std::fs::create_dir_all(out_dir).map_err(|e| PersistError::io(out_dir, e))?;
    write_report_files(out_dir, &report, &decisions)?;
    let mut lines = Vec::new();
    for r in &records {
        lines.extend(serde_json::to_vec(r).expect("record serializes"));
        lines.push(b'\n');
    }
    persist::write_atomic(&out_dir.join(RECORDS_FILE), &lines)?;
    log::info!(
        "{}: accuracy {:.4} over {} samples, {} flagged",
        strategy,
        report.accuracy,
        report.samples,
        report.flagged
    );
    Ok(EvaluateSummary { report, records })
}

/// Classifies images on the worker pool with the configured strategy; results keep
/// input order.
pub fn classify_paths(engine: &Engine, paths: &[PathBuf]) -> Result<Vec<Result<ClassifyRecord, PipelineError>>, PipelineError> {
    Ok(pool(engine.config().workers)?.install(|| paths.par_iter().map(|p| classify_path(engine, p)).collect()))
}

/// Top-1 visual accuracy as `(correct, total)` over labeled images, without calibration.
pub fn visual_accuracy(engine: &Engine, samples: &[(ClassId, &crate::imaging::Image)]) -> Result<(usize, usize), PipelineError> {
    let hits: Vec<bool> = samples
        .par_iter()
        .map(|(truth, img)| engine.visual_top1(img).map(|p| p == *truth))
        .collect::<Result<_, _>>()?;
    Ok((hits.iter().filter(|&&h| h).count(), hits.len()))
}

pub fn load_records(path: &Path) -> Result<Vec<ClassifyRecord>, PipelineError> {
    let file = std::fs::File::open(path).map_err(|e| PersistError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PersistError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| PipelineError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Writes the flagged fusion records among `records_path` as review lines; returns how
/// many were written.
pub fn export_review_queue(records_path: &Path, out: &Path) -> Result<usize, PipelineError> {
    let queue: Vec<ReviewRecord<f64>> = load_records(records_path)?
        .into_iter()
        .filter(|r| r.flagged)
        .map(|r| ReviewRecord {
            sample_id: r.sample_id,
            visual: r.visual.map(|v| v.top).unwrap_or_default(),
            text: r.text.map(|t| t.top).unwrap_or_default(),
            fused: r.fused.unwrap_or_default(),
            chosen: r.predicted,
            chosen_confidence: r.confidence,
            flag_reason: r.flag_reason,
        })
        .collect();
    write_review_queue(out, &queue)?;
    Ok(queue.len())
}
