use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plantar-grf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_train_eval_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.bin");
    let ck = dir.path().join("ck.bin");
    let hist = dir.path().join("h.jsonl");

    let o = run(&[
        "synth", "--seed", "7", "--subjects", "2", "--steps", "15", "--grid-h", "16", "--grid-w", "8", "--stance-len",
        "8", "--out", p(&data),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.exists());

    let o = run(&[
        "train", "--data", p(&data), "--variant", "dprgnet", "--epochs", "2", "--batch-size", "8", "--history", p(&hist),
        "--out", p(&ck),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ck.exists());
    assert!(Path::new(&format!("{}.txt", p(&ck))).exists());
    assert_eq!(std::fs::read_to_string(&hist).unwrap().lines().count(), 2);

    let o = run(&["eval", "--data", p(&data), "--ckpt", p(&ck), "--folds", "5", "--mode", "step"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = text(&o);
    let fold_rows = out
        .lines()
        .filter(|l| l.split_whitespace().next().is_some_and(|w| w.parse::<usize>().is_ok()))
        .count();
    assert_eq!(fold_rows, 5, "{out}");
    assert!(out.contains("six-channel mean NRMSE"));

    let csv = dir.path().join("pred.csv");
    let o = run(&["predict", "--data", p(&data), "--ckpt", p(&ck), "--out", p(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let body = std::fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with("sample,subject,frame,GRF_ML_pred"));

    let o = run(&["priors", "--data", p(&data), "--out-dir", p(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("partition.txt").exists());
    assert!(dir.path().join("temporal_prior.csv").exists());
}

#[test]
fn constant_baseline_eval_runs_without_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.bin");
    assert!(run(&["synth", "--subjects", "5", "--steps", "4", "--grid-h", "16", "--grid-w", "8", "--out", p(&data)])
        .status
        .success());
    let o = run(&["eval", "--data", p(&data), "--constant", "mean", "--folds", "5", "--mode", "subject"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(text(&o).starts_with("constant_mean"));
}

#[test]
fn usage_and_runtime_errors_have_distinct_codes() {
    assert_eq!(run(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let o = run(&["eval", "--data", "/nonexistent/d.bin", "--constant", "zero"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error:"));
}

#[test]
fn corrupt_dataset_is_reported_not_panicking() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.bin");
    assert!(run(&["synth", "--subjects", "1", "--steps", "3", "--grid-h", "16", "--grid-w", "8", "--out", p(&data)])
        .status
        .success());
    let mut bytes = std::fs::read(&data).unwrap();
    bytes[3] ^= 0xff;
    std::fs::write(&data, bytes).unwrap();
    let o = run(&["eval", "--data", p(&data), "--constant", "zero"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("integrity"));
}

#[test]
fn gradcheck_reports_and_passes_for_dprgnet() {
    let o = run(&["gradcheck", "--variant", "dprgnet"]);
    let out = text(&o);
    assert!(out.contains("max relative error"), "{out}");
    assert!(o.status.success(), "{out}");
    assert!(out.trim_end().ends_with("PASS"));
}
