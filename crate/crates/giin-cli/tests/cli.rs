//! End-to-end runs of the installed binary: happy paths, artifact layout,
//! and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn giin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_giin"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL: &[&str] =
    &["--set", "scale=0.03125", "--set", "epochs=2", "--set", "lr=0.001", "--set", "seed=9"];

fn make_dataset(dir: &Path) {
    let out = giin(
        dir,
        &["synth", "--out", "data", "--n", "20", "--feature-dim", "8", "--noise", "0.3", "--seed", "2"],
    );
    assert_ok(&out);
    assert!(dir.join("data/manifest.csv").exists());
}

#[test]
fn synth_train_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    make_dataset(tmp.path());

    let mut train_args = vec!["train", "--data", "data/manifest.csv", "--out", "run"];
    train_args.extend_from_slice(SMALL);
    let out = giin(tmp.path(), &train_args);
    assert_ok(&out);
    for artifact in ["run/model.ck", "run/history.csv", "run/metrics_val.csv", "run/metrics_test.csv"] {
        assert!(tmp.path().join(artifact).exists(), "missing {artifact}");
    }
    assert!(stdout(&out).contains("final train loss:"));

    let out = giin(
        tmp.path(),
        &["eval", "--data", "data/manifest.csv", "--checkpoint", "run/model.ck", "--split", "val"],
    );
    assert_ok(&out);
    let report = stdout(&out);
    assert!(report.starts_with("category,accuracy,auc\n"));
    assert!(report.contains("\nmean,"));
    assert_eq!(
        report,
        std::fs::read_to_string(tmp.path().join("run/metrics_val.csv")).unwrap(),
        "eval must reproduce the training-time report"
    );
}

#[test]
fn print_config_short_circuits_and_audits() {
    let tmp = tempfile::tempdir().unwrap();
    let out = giin(
        tmp.path(),
        &["train", "--data", "absent.csv", "--out", "nowhere", "--print-config"],
    );
    assert_ok(&out);
    let text = stdout(&out);
    for needle in ["lr=0.00001", "batch_size=4", "epochs=100", "# gat1_heads=8", "# dropout=none"] {
        assert!(text.contains(needle), "missing {needle} in:\n{text}");
    }
    assert!(!tmp.path().join("nowhere").exists(), "print-config must not run anything");
}

#[test]
fn config_errors_exit_2_runtime_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = giin(tmp.path(), &["train", "--data", "d.csv", "--out", "o", "--set", "mode=vit"]);
    assert_eq!(out.status.code(), Some(2), "unknown mode is a config error");

    let out = giin(tmp.path(), &["train", "--data", "missing.csv", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1), "missing manifest is a runtime error");

    let out = giin(tmp.path(), &["score", "--labels", "9,0,0,0,0,0,0,0"]);
    assert_eq!(out.status.code(), Some(1), "class out of range surfaces as data error");

    let out = giin(tmp.path(), &["eval"]);
    assert_eq!(out.status.code(), Some(2), "clap usage errors exit 2");
}

#[test]
fn score_single_case_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = giin(tmp.path(), &["score", "--labels", "2,2,2,2,1,2,1,0"]);
    assert_ok(&out);
    assert_eq!(stdout(&out), "score: 8\nsuspected: true\n");

    let out = giin(tmp.path(), &["score", "--labels", "0,0,0,0,0,0,0,0"]);
    assert_ok(&out);
    assert_eq!(stdout(&out), "score: 0\nsuspected: false\n");

    make_dataset(tmp.path());
    let out = giin(tmp.path(), &["score", "--data", "data/manifest.csv"]);
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.starts_with("id,score,suspected\n"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn gradcheck_passes_and_fault_injection_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["gradcheck", "--samples", "2"];
    args.extend_from_slice(&["--set", "mode=celm", "--set", "scale=0.03125", "--set", "seed=1"]);
    let out = giin(tmp.path(), &args);
    assert_ok(&out);
    assert!(stdout(&out).starts_with("group,tensors,coords,max_rel_err"));

    let mut args = vec!["gradcheck", "--samples", "2", "--inject-fault", "celm.clin.VS.w1"];
    args.extend_from_slice(&["--set", "mode=celm", "--set", "scale=0.03125", "--set", "seed=1"]);
    let out = giin(tmp.path(), &args);
    assert_eq!(out.status.code(), Some(1), "corrupted gradient must fail the check");
}

#[test]
fn dump_attention_requires_graph_mode() {
    let tmp = tempfile::tempdir().unwrap();
    make_dataset(tmp.path());
    let mut train_args =
        vec!["train", "--data", "data/manifest.csv", "--out", "run", "--set", "mode=baseline"];
    train_args.extend_from_slice(SMALL);
    assert_ok(&giin(tmp.path(), &train_args));
    let out = giin(
        tmp.path(),
        &["dump-attention", "--checkpoint", "run/model.ck", "--data", "data/manifest.csv", "--id", "synth-00000"],
    );
    assert_eq!(out.status.code(), Some(2), "baseline has no attention");
}

#[test]
fn ablate_writes_the_comparison_table() {
    let tmp = tempfile::tempdir().unwrap();
    make_dataset(tmp.path());
    let mut args = vec!["ablate", "--data", "data/manifest.csv", "--out", "cmp", "--threads", "2"];
    args.extend_from_slice(&["--set", "scale=0.03125", "--set", "epochs=1", "--set", "seed=3"]);
    let out = giin(tmp.path(), &args);
    assert_ok(&out);
    let csv = std::fs::read_to_string(tmp.path().join("cmp/ablate.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 8, "header plus seven configurations");
    assert_eq!(lines[0], "config,mode,variant,train_loss,val_accuracy,val_auc,test_accuracy,test_auc");
    for name in ["baseline", "celm", "full-separate", "full-dc", "full-cd", "full-inv", "full-fused"] {
        assert!(csv.contains(&format!("\n{name},")), "missing row {name}");
    }
}
