use std::path::Path;
use std::process::{Command, Output};

fn sdiff(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdiff"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = sdiff(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn err_line(out: &Output) -> String {
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {stderr}");
    lines[0].to_string()
}

const TRAIN: &[&str] = &["--hidden", "32", "--epochs", "4", "--lr", "1e-3", "--eval-every", "2", "--deterministic"];

fn prepared(dir: &Path) {
    ok(dir, &["synth", "--users", "60", "--items", "20", "--base", "6", "--out", "data.tsv"]);
    ok(dir, &["prepare", "--data", "data.tsv", "--k", "12", "--out", "run", "--deterministic"]);
}

#[test]
fn mismatched_data_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepared(dir);
    std::fs::write(dir.join("other.tsv"), "a\tb\na\tc\nb\tc\nc\ta\nc\tb\n").unwrap();
    let mut args = vec!["train", "--out", "run", "--data", "other.tsv"];
    args.extend_from_slice(TRAIN);
    let line = err_line(&sdiff(dir, &args));
    assert!(line.starts_with("error: hash-mismatch: "), "{line}");
    assert!(!dir.join("run/model.ckpt").exists());
}

#[test]
fn tampered_basis_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepared(dir);
    let path = dir.join("run/basis.bin");
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    let mut args = vec!["train", "--out", "run"];
    args.extend_from_slice(TRAIN);
    assert!(err_line(&sdiff(dir, &args)).starts_with("error: hash-mismatch: "));
}

#[test]
fn failed_prepare_leaves_no_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--users", "30", "--items", "10", "--base", "4", "--out", "data.tsv"]);
    let line = err_line(&sdiff(dir, &["prepare", "--data", "data.tsv", "--k", "50", "--out", "run"]));
    assert!(line.starts_with("error: rank-too-large: "), "{line}");
    assert!(!dir.join("run").exists() || std::fs::read_dir(dir.join("run")).unwrap().next().is_none());
}

#[test]
fn usage_and_parse_errors_are_single_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert!(err_line(&sdiff(dir, &["prepare", "--nope"])).starts_with("error: usage: "));
    assert!(err_line(&sdiff(dir, &["prepare"])).starts_with("error: usage: --data"));
    std::fs::write(dir.join("bad.tsv"), "u1\ti1\nu2\n").unwrap();
    let line = err_line(&sdiff(dir, &["prepare", "--data", "bad.tsv"]));
    assert!(line.starts_with("error: malformed: "), "{line}");
    std::fs::write(dir.join("bad.conf"), "lr 0.1\n").unwrap();
    let line = err_line(&sdiff(dir, &["snr", "--config", "bad.conf"]));
    assert!(line.starts_with("error: malformed: "), "{line}");
}

#[test]
fn config_file_and_flags_land_in_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepared(dir);
    std::fs::write(dir.join("run.conf"), "# training\nlr = 0.005\nbatch_size = 16\nhidden = 24\n").unwrap();
    ok(
        dir,
        &["train", "--out", "run", "--config", "run.conf", "--hidden", "32", "--epochs", "2", "--deterministic"],
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("run/manifest.json")).unwrap()).unwrap();
    let cfg = &manifest["stages"]["train"]["config"];
    assert_eq!(cfg["lr"], "0.005");
    assert_eq!(cfg["batch-size"], "16");
    assert_eq!(cfg["hidden"], "32");
    assert_eq!(cfg["k"], "12");
    let inputs = &manifest["stages"]["train"]["inputs"];
    assert_eq!(inputs["data"], manifest["data"]["content_hash"]);
    assert_eq!(inputs["basis.bin"], manifest["stages"]["prepare"]["outputs"]["basis.bin"]);
    assert!(manifest["stages"]["train"]["outputs"]["model.ckpt"].is_string());
    assert!(manifest["stages"]["train"]["started_unix"].is_null());
}

#[test]
fn recommend_for_listed_users() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepared(dir);
    let mut args = vec!["train", "--out", "run"];
    args.extend_from_slice(TRAIN);
    ok(dir, &args);
    std::fs::write(dir.join("users.txt"), "5\n# comment\n0\n").unwrap();
    ok(dir, &["recommend", "--out", "run", "--users", "users.txt", "--topk", "3"]);
    let recs = std::fs::read_to_string(dir.join("run/recommendations.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = recs.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0][0], "5");
    assert_eq!(rows[3][0], "0");
    assert_eq!(rows.iter().map(|r| r[2]).collect::<Vec<_>>(), ["1", "2", "3", "1", "2", "3"]);
    let data = std::fs::read_to_string(dir.join("data.tsv")).unwrap();
    for r in &rows {
        assert!(!data.lines().any(|l| l == format!("{}\t{}", r[0], r[1])), "history item recommended");
    }
    std::fs::write(dir.join("unknown.txt"), "nobody\n").unwrap();
    let line = err_line(&sdiff(dir, &["recommend", "--out", "run", "--users", "unknown.txt"]));
    assert!(line.starts_with("error: usage: unknown user id"), "{line}");
}

#[test]
fn snr_table_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = ok(tmp.path(), &["snr", "--points", "4", "--steps", "2"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,t,frequency_index,d,alpha,sigma,snr,bound");
    assert_eq!(lines.len(), 1 + 3 * 3 * 4);
    let variants: std::collections::BTreeSet<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(variants.into_iter().collect::<Vec<_>>(), ["iso", "ve", "vp"]);
}

#[test]
fn ablate_reports_each_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--users", "60", "--items", "20", "--base", "6", "--out", "data.tsv"]);
    let mut args = vec!["ablate", "--data", "data.tsv", "--k", "12", "--out", "abl", "--topk", "10"];
    args.extend_from_slice(TRAIN);
    let table = ok(dir, &args);
    for label in ["s-diff-vp", "s-diff-ve", "s-diff-iso", "popularity"] {
        assert!(table.contains(label), "{table}");
    }
    let csv = std::fs::read_to_string(dir.join("abl/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn sweep_over_ranks() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--users", "60", "--items", "20", "--base", "6", "--out", "data.tsv"]);
    let mut args = vec!["sweep", "--data", "data.tsv", "--ranks", "4,8", "--out", "sw", "--topk", "5"];
    args.extend_from_slice(TRAIN);
    ok(dir, &args);
    let csv = std::fs::read_to_string(dir.join("sw/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,rank,k,recall,ndcg,best_epoch");
    assert!(lines[1].starts_with("vp,4,5,"));
    assert!(lines[2].starts_with("vp,8,5,"));
}
