use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use idclass::fusion::FusionRule;
use idclass::pipeline::{
    build_provider, classify_paths, enroll, evaluate, export_review_queue, train_calibration, Engine,
    PipelineConfig, PipelineError, ProviderKind, Registry, Strategy,
};
use idclass::synth::{default_specs, gen_synthetic, GenOptions, JitterProfile, SyntheticCardSpec};

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Classify identity-document images by keypoint matching fused with keyword text matching.
#[derive(Parser)]
#[command(name = "idclass", version)]
struct Cli {
    /// JSON pipeline configuration; missing fields take their defaults.
    #[arg(long, global = true, env = "IDCLASS_CONFIG")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Flags that override individual configuration values.
#[derive(Args)]
struct Overrides {
    /// hog_sp3, fuzzy_color, sift, ocr or fusion.
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    /// Candidates kept from each classifier before fusion.
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// Nearest/second-nearest distance ratio for keypoint matches.
    #[arg(long, global = true)]
    matcher_ratio: Option<f32>,
    /// Decisions below this confidence are flagged for review.
    #[arg(long, global = true)]
    review_threshold: Option<f64>,
    /// Fusion rule: mean or min.
    #[arg(long, global = true, value_parser = parse_rule)]
    fusion_rule: Option<FusionRule>,
    /// Worker threads for batch runs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// OCR fixture file (hash to text).
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Use a remote OCR service at this URL instead of fixtures.
    #[arg(long, global = true)]
    ocr_endpoint: Option<String>,
}

fn parse_rule(s: &str) -> Result<FusionRule, String> {
    match s {
        "mean" => Ok(FusionRule::Mean),
        "min" => Ok(FusionRule::Min),
        _ => Err(format!("unknown fusion rule {s:?} (mean, min)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract and cache source features and keyword metadata into a registry.
    Enroll {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        registry: PathBuf,
    },
    /// Classify images; prints one JSON record per image.
    Classify {
        #[arg(long)]
        registry: PathBuf,
        /// Write records here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Fit the confidence calibration on a labeled corpus.
    TrainCalibration {
        #[arg(long)]
        registry: PathBuf,
        /// CSV with sample_id,path,class_id rows.
        #[arg(long)]
        labels: PathBuf,
    },
    /// Classify a labeled corpus and write report, decisions and ROC files.
    Evaluate {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic card corpus with labels, manifest, metadata and OCR fixtures.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        samples_per_class: u32,
        /// none, clean or degraded; ignored with --specs.
        #[arg(long, default_value = "clean")]
        profile: JitterProfile,
        /// JSON array of card specs instead of the built-in ten classes.
        #[arg(long)]
        specs: Option<PathBuf>,
    },
    /// Collect the flagged records of an evaluation into a review queue.
    ExportReviewQueue {
        /// records.jsonl written by evaluate.
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(v) = o.strategy {
        cfg.strategy = v;
    }
    if let Some(v) = o.top_k {
        cfg.top_k = v;
    }
    if let Some(v) = o.matcher_ratio {
        cfg.matcher_ratio = v;
    }
    if let Some(v) = o.review_threshold {
        cfg.review_threshold = v;
    }
    if let Some(v) = o.fusion_rule {
        cfg.fusion_rule = v;
    }
    if let Some(v) = o.workers {
        cfg.workers = v;
    }
    if let Some(v) = &o.fixtures {
        cfg.provider.kind = ProviderKind::Fixture;
        cfg.provider.fixtures = Some(v.clone());
    }
    if let Some(v) = &o.ocr_endpoint {
        cfg.provider.kind = ProviderKind::Http;
        cfg.provider.http.endpoint = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = config(cli)?;
    match &cli.command {
        Command::Enroll { manifest, registry } => {
            let report = enroll(manifest, registry, &cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&report);
        }
        Command::Classify { registry, out, images } => {
            let reg = Registry::load(registry)?;
            let provider = if cfg.strategy.uses_text() {
                let first = images[0].parent().unwrap_or(Path::new("."));
                let dirs: Vec<&Path> = [Some(first), first.parent()].into_iter().flatten().collect();
                Some(build_provider(&cfg.provider, &dirs)?)
            } else {
                None
            };
            let engine = Engine::new(reg, cfg, provider)?;
            let mut buf = Vec::new();
            for r in classify_paths(&engine, images)? {
                serde_json::to_writer(&mut buf, &r?).expect("record serializes");
                buf.push(b'\n');
            }
            match out {
                Some(p) => idclass::persist::write_atomic(p, &buf)?,
                None => std::io::stdout()
                    .write_all(&buf)
                    .map_err(|e| idclass::persist::PersistError::io(Path::new("<stdout>"), e))?,
            }
        }
        Command::TrainCalibration { registry, labels } => {
            let m = train_calibration(registry, labels, &cfg)?;
            print_json(&serde_json::json!({
                "w": m.w, "b": m.b, "trained_on": m.trained_on, "epochs": m.epochs, "final_loss": m.final_loss,
            }));
        }
        Command::Evaluate { registry, labels, out } => {
            let s = evaluate(registry, labels, &cfg, cfg.strategy, out)?;
            let r = &s.report;
            println!(
                "{}: accuracy {:.4}, sensitivity {:.4}, specificity {:.4}, AUC {:.4}, {} of {} flagged",
                r.strategy, r.accuracy, r.sensitivity, r.specificity, r.roc.auc, r.flagged, r.samples
            );
        }
        Command::GenSynthetic { out, seed, samples_per_class, profile, specs } => {
            let specs: Vec<SyntheticCardSpec> = match specs {
                Some(p) => idclass::persist::read_json(p)?,
                None => default_specs(*profile),
            };
            let opts = GenOptions { seed: *seed, samples_per_class: *samples_per_class };
            let rows = gen_synthetic(&specs, &opts, out)?;
            println!("{} classes, {} samples written to {}", specs.len(), rows.len(), out.display());
        }
        Command::ExportReviewQueue { records, out } => {
            let n = export_review_queue(records, out)?;
            println!("{n} records queued for review in {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}
