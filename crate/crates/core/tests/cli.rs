use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn fcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcm")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gradcheck_passes() {
    let o = fcm(&["gradcheck", "--seed", "7", "--n", "5", "--dim", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let err: f64 = out.rsplit(' ').next().unwrap().trim().parse().unwrap();
    assert!(err < 1e-5, "{out}");
}

#[test]
fn gradcheck_on_corpus_instances() {
    let o = fcm(&[
        "gradcheck",
        "--corpus",
        path(&fixture("train.jsonl")),
        "--embeddings",
        path(&fixture("embeddings.txt")),
        "--count",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

/// Trains on the separable fixture and returns (dir, model path, predictions path).
fn train_and_predict(extra: &[&str]) -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.fcm");
    let log = dir.path().join("train.log");
    let (train, dev, emb) = (fixture("train.jsonl"), fixture("dev.jsonl"), fixture("embeddings.txt"));
    let mut args = vec![
        "train",
        "--train",
        path(&train),
        "--dev",
        path(&dev),
        "--embeddings",
        path(&emb),
        "--model",
        path(&model),
        "--log",
        path(&log),
        "--eval",
        "semeval",
        "--seed",
        "3",
    ];
    args.extend_from_slice(extra);
    let o = fcm(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(model.exists());
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert!(log_text.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));

    let pred = dir.path().join("pred.jsonl");
    let o = fcm(&[
        "predict",
        "--model",
        path(&model),
        "--test",
        path(&fixture("dev.jsonl")),
        "--embeddings",
        path(&fixture("embeddings.txt")),
        "--out",
        path(&pred),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    (dir, model, pred)
}

fn dev_accuracy(pred: &Path) -> f64 {
    let gold: Vec<serde_json::Value> = std::fs::read_to_string(fixture("dev.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(pred)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), gold.len());
    let mut hits = 0;
    for (p, g) in lines.iter().zip(&gold) {
        assert_eq!(p["sentence"], g["id"]);
        assert_eq!(p["m1"], "m1");
        let proba: Vec<f64> = serde_json::from_value(p["proba"].clone()).unwrap();
        assert!((proba.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        if p["label"] == g["relations"][0]["label"] {
            hits += 1;
        }
    }
    hits as f64 / gold.len() as f64
}

#[test]
fn train_then_predict_separable_fixture() {
    let (_dir, _, pred) = train_and_predict(&[]);
    assert_eq!(dev_accuracy(&pred), 1.0);
}

#[test]
fn fine_tuned_and_hybrid_models_round_trip() {
    for extra in [&["--fine-tune"][..], &["--kind", "hybrid"], &["--kind", "loglin"]] {
        let (_dir, _, pred) = train_and_predict(extra);
        assert_eq!(dev_accuracy(&pred), 1.0, "{extra:?}");
    }
}

#[test]
fn predict_is_deterministic() {
    let (dir, model, pred) = train_and_predict(&[]);
    let again = dir.path().join("again.jsonl");
    let o = fcm(&[
        "predict",
        "--model",
        path(&model),
        "--test",
        path(&fixture("dev.jsonl")),
        "--embeddings",
        path(&fixture("embeddings.txt")),
        "--out",
        path(&again),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&pred).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn eval_identical_files_is_perfect() {
    let (dir, _, pred) = train_and_predict(&[]);
    let report = dir.path().join("report.json");
    for gold in [pred.clone(), fixture("dev.jsonl")] {
        let o = fcm(&[
            "eval",
            "--gold",
            path(&gold),
            "--pred",
            path(&pred),
            "--eval",
            "semeval",
            "--report",
            path(&report),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("F1=100.00"), "{}", stdout(&o));
        let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(r["report"]["macro_f1"], 1.0);
        assert_eq!(r["report"]["micro"]["f1"], 1.0);
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"eval": "semeval", "training": {"epochs": 2, "l2": 0.0}}"#)
        .unwrap();
    let model = dir.path().join("m.fcm");
    let log = dir.path().join("log");
    let o = fcm(&[
        "train",
        "--train",
        path(&fixture("train.jsonl")),
        "--embeddings",
        path(&fixture("embeddings.txt")),
        "--model",
        path(&model),
        "--log",
        path(&log),
        "--config",
        path(&cfg),
        "--epochs",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // No dev set: every epoch runs, so the log length is the epoch count.
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 3);
    let extra = fcm::archive::load_extra(&model).unwrap();
    assert_eq!(extra["run"]["training"]["epochs"], 3);
    assert_eq!(extra["run"]["eval"], "semeval");
}

#[test]
fn usage_errors_exit_1() {
    for args in [
        &["train"][..],
        &["frobnicate"],
        &["gradcheck", "--dim", "0"],
        &["train", "--train", "x", "--model", "y", "--eval", "bogus"],
        &["train", "--train", "x", "--model", "y", "--templates", "nope"],
        &["train", "--train", "x", "--model", "y", "--lr", "-1"],
    ] {
        let o = fcm(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).contains("panicked"));
    }
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    let line = std::fs::read_to_string(fixture("train.jsonl")).unwrap();
    let first = line.lines().next().unwrap().replacen("\"head\":3", "\"head\":42", 1);
    std::fs::write(&bad, format!("{first}\n")).unwrap();
    let model = dir.path().join("m.fcm");
    let o = fcm(&[
        "train",
        "--train",
        path(&bad),
        "--embeddings",
        path(&fixture("embeddings.txt")),
        "--model",
        path(&model),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 1") && err.contains("head"), "{err}");

    let o = fcm(&["predict", "--model", path(&fixture("dev.jsonl")), "--test", path(&fixture("dev.jsonl"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("magic"));

    let o = fcm(&[
        "train",
        "--train",
        path(&fixture("train.jsonl")),
        "--embeddings",
        "/nonexistent/vectors.txt",
        "--model",
        path(&model),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ablate_prints_a_row_per_configuration() {
    let o = fcm(&[
        "ablate",
        "--train",
        path(&fixture("train.jsonl")),
        "--dev",
        path(&fixture("dev.jsonl")),
        "--embeddings",
        path(&fixture("embeddings.txt")),
        "--eval",
        "semeval",
        "--epochs",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for row in ["full", "-HeadEmb", "-Context", "-InBetween", "-OnPath", "-EntityTypes"] {
        assert!(out.lines().any(|l| l.starts_with(row)), "{row} missing from\n{out}");
    }
}
