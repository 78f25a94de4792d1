use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn san(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_san"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

/// Tiny widths and a small synthetic split.
fn tiny_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("tiny.json");
    let text = format!(
        r#"{{
  "model": {{ "hidden": 4, "word_dim": 5, "char_dim": 3, "char_windows": [1, 3], "char_channels": [2, 3],
             "lexicon_dim": 6, "attention_dim": 5, "steps": 3 }},
  "epochs": 1,
  "batch_size": 8,
  "data": {{ "source": "synthetic", "task": {{}}, "train": 40, "dev": 20 }}{extra}
}}"#
    );
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&san(&["--help"])), 0);
    assert_eq!(code(&san(&["frobnicate"])), 1);
    assert_eq!(code(&san(&["train"])), 1);
    assert_eq!(code(&san(&["train", "--synthetic", "--epochs", "0"])), 1);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), "");
    let malformed = fixture("snli_malformed.jsonl");
    let out = san(&["train", "--config", &config, "--data", &malformed, &malformed]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("snli_malformed.jsonl:2:"));
    let missing = s(&dir.path().join("absent.jsonl"));
    assert_eq!(
        code(&san(&["train", "--config", &config, "--data", &missing, &missing])),
        2
    );
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), r#", "schedule": { "base": 1e300 }"#);
    let out = san(&["train", "--config", &config, "--synthetic", "--epochs", "2"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_gen_train_eval_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let config = tiny_config(dir.path(), "");

    let out = san(&["synth-gen", "--out", &s(&data), "--train", "40", "--dev", "20"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (train, dev) = (s(&data.join("train.cache")), s(&data.join("dev.cache")));
    assert_eq!(fs::read_to_string(&dev).unwrap().lines().count(), 20);

    let out = san(&[
        "train",
        "--config",
        &config,
        "--data",
        &train,
        &dev,
        "--seed",
        "4",
        "--out",
        &s(&run),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["config.json", "metrics.jsonl", "best.ckpt"] {
        assert!(run.join(name).exists(), "{name}");
    }
    // One record per epoch per split.
    assert_eq!(
        fs::read_to_string(run.join("metrics.jsonl")).unwrap().lines().count(),
        2
    );

    let ckpt = s(&run.join("best.ckpt"));
    let out = san(&["eval", "--checkpoint", &ckpt, "--data", &dev, "--out", &s(&run)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(run.join("eval.json")).unwrap()).unwrap();
    assert!((0.0..=1.0).contains(&report["accuracy"].as_f64().unwrap()));

    let traces = run.join("steps.jsonl");
    let out = san(&[
        "dump-steps",
        "--checkpoint",
        &ckpt,
        "--data",
        &dev,
        "--out",
        &s(&traces),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<serde_json::Value> = fs::read_to_string(&traces)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 20);
    assert_eq!(lines[0]["steps"].as_array().unwrap().len(), 3);

    // A two-way file against a three-way checkpoint is a data error.
    let quora = fixture("quora.tsv");
    let out = san(&["eval", "--checkpoint", &ckpt, "--data", &quora, "--format", "quora"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn compare_and_sweep_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), "");
    let out_dir = dir.path().join("reports");

    let out = san(&["compare", "--config", &config, "--synthetic", "--out", &s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("compare.json")).unwrap()).unwrap();
    assert!(report["delta"].is_number());
    assert_eq!(report["references"].as_array().unwrap().len(), 5);

    let out = san(&[
        "sweep",
        "--config",
        &config,
        "--synthetic",
        "--steps",
        "3",
        "--out",
        &s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("sweep.json")).unwrap()).unwrap();
    let steps: Vec<u64> = report["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["steps"].as_u64().unwrap())
        .collect();
    assert_eq!(steps, [1, 2, 3]);
}
