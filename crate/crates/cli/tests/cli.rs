use std::path::Path;
use std::process::{Command, Output};

fn idclass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idclass"))
        .args(args)
        .env_remove("IDCLASS_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let test = dir.path().join("test");
    let reg = dir.path().join("registry");
    ok(&idclass(&["gen-synthetic", "--out", s(&corpus), "--samples-per-class", "2", "--seed", "4"]));
    ok(&idclass(&["gen-synthetic", "--out", s(&test), "--samples-per-class", "1", "--seed", "5"]));

    let out = idclass(&["enroll", "--manifest", s(&corpus.join("manifest.json")), "--registry", s(&reg)]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("keywords of class 3 are a subset of class 4"));
    assert!(reg.join("registry.json").exists() && reg.join("features/10.json").exists());

    // fusion needs a calibration model
    let sample = test.join("samples/c001_s000.png");
    let out = idclass(&["classify", "--registry", s(&reg), s(&sample)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    ok(&idclass(&["train-calibration", "--registry", s(&reg), "--labels", s(&corpus.join("labels.csv"))]));
    assert!(reg.join("calibration.json").exists());

    let first = idclass(&["classify", "--registry", s(&reg), s(&sample)]);
    ok(&first);
    let rec: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(rec["predicted"], 1);
    assert_eq!(rec["strategy"], "fusion");
    assert!(rec["visual"]["raw_scores"].is_array() && rec["fused"].is_array());
    let again = idclass(&["classify", "--registry", s(&reg), s(&sample)]);
    assert_eq!(first.stdout, again.stdout);

    let eval = dir.path().join("eval");
    let out = idclass(&["evaluate", "--registry", s(&reg), "--labels", s(&test.join("labels.csv")), "--out", s(&eval)]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("fusion: accuracy"));
    for f in ["report.json", "decisions.csv", "roc.csv", "roc.svg", "records.jsonl"] {
        assert!(eval.join(f).exists(), "{f}");
    }
    let queue = dir.path().join("review.jsonl");
    ok(&idclass(&["export-review-queue", "--records", s(&eval.join("records.jsonl")), "--out", s(&queue)]));
    assert!(queue.exists());

    // sift-only with a config file
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"strategy": "sift", "workers": 2}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_idclass"))
        .args(["classify", "--registry", s(&reg), s(&test.join("samples/c007_s000.png"))])
        .env("IDCLASS_CONFIG", &cfg)
        .output()
        .unwrap();
    ok(&out);
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((rec["strategy"].as_str(), rec["predicted"].as_u64()), (Some("sift"), Some(7)));
    assert!(rec.get("text").is_none());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"top_k": 0}"#).unwrap();
    let img = dir.path().join("x.png");
    let out = idclass(&["--config", s(&cfg), "classify", "--registry", "nowhere", s(&img)]);
    assert_eq!(out.status.code(), Some(2));

    let out = idclass(&["classify", "--registry", s(&dir.path().join("missing")), s(&img)]);
    assert_eq!(out.status.code(), Some(3));

    let out = idclass(&["enroll", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));

    // too few samples to train on
    let corpus = dir.path().join("tiny");
    ok(&idclass(&["gen-synthetic", "--out", s(&corpus), "--samples-per-class", "0"]));
    let reg = dir.path().join("reg");
    ok(&idclass(&["enroll", "--manifest", s(&corpus.join("manifest.json")), "--registry", s(&reg)]));
    let labels = dir.path().join("five.csv");
    let mut rows = String::from("sample_id,path,class_id\n");
    for i in 1..=5 {
        rows += &format!("s{i},tiny/sources/{i}.png,{i}\n");
    }
    std::fs::write(&labels, rows).unwrap();
    let out = idclass(&["train-calibration", "--registry", s(&reg), "--labels", s(&labels)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("5"));
}
