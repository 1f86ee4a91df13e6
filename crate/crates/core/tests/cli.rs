//! End-to-end runs of the `dcn` binary on a small generated log.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn dcn(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_dcn")).args(args).output().expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(args: &[&str]) -> Run {
    let r = dcn(args);
    assert_eq!(r.code, 0, "dcn {args:?} failed:\n{}", r.stderr);
    r
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Small training settings shared by every run below.
const SMALL: &str = "embed_dim=8\nmax_seq_len=5\nhidden=16,8\nbatch_size=100\nlr=0.01\nepochs_max=2\nk_neg_valid=9\nk_neg_eval=9\nprecision=f32\n";

struct Fixture {
    dir: TempDir,
    data: PathBuf,
    config: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("raw");
        ok(&["generate", "--out", s(&raw), "--users", "60", "--items", "80", "--clusters", "4", "--interactions", "4000"]);
        let data = dir.path().join("data");
        let csv = raw.join("interactions.csv");
        ok(&["prepare", "--input", s(&csv), "--n-core", "5", "--out", s(&data)]);
        let config = dir.path().join("small.cfg");
        fs::write(&config, format!("data={}\n{SMALL}", data.display())).unwrap();
        Self { dir, data, config }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &Path, extra: &[&str]) -> Run {
        let mut args = vec!["train", "--config", s(&self.config), "--out", s(out)];
        args.extend_from_slice(extra);
        dcn(&args)
    }
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn prepare_writes_splits_and_is_reproducible() {
    let f = Fixture::new();
    for file in ["train.csv", "valid.csv", "test.csv", "metadata.json", "config.txt"] {
        assert!(f.data.join(file).is_file(), "{file}");
    }
    let again = f.out("data2");
    let csv = f.dir.path().join("raw/interactions.csv");
    ok(&["prepare", "--input", s(&csv), "--n-core", "5", "--out", s(&again)]);
    for file in ["train.csv", "valid.csv", "test.csv", "metadata.json"] {
        assert_eq!(read(&f.data.join(file)), read(&again.join(file)), "{file}");
    }
}

#[test]
fn prepare_with_explicit_boundaries() {
    let f = Fixture::new();
    let csv = f.dir.path().join("raw/interactions.csv");
    let out = f.out("fixed");
    ok(&["prepare", "--input", s(&csv), "--n-core", "5", "--train-end", "3000", "--valid-end", "3500", "--out", s(&out)]);
    let meta: serde_json::Value = serde_json::from_str(&read(&out.join("metadata.json"))).unwrap();
    assert_eq!(meta["train_end"], 3000);
    assert_eq!(meta["valid_end"], 3500);
}

#[test]
fn prepare_that_filters_everything_warns_and_succeeds() {
    let f = Fixture::new();
    let csv = f.dir.path().join("raw/interactions.csv");
    let out = f.out("empty");
    let r = ok(&["prepare", "--input", s(&csv), "--n-core", "100000", "--out", s(&out)]);
    assert!(r.stderr.contains("warning"), "{}", r.stderr);
    assert_eq!(read(&out.join("test.csv")).lines().count(), 1);
}

#[test]
fn malformed_input_is_an_input_error_with_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "user_id,item_id,timestamp\nu1,i1,10\nu2,i2,noon\n").unwrap();
    let r = dcn(&["prepare", "--input", s(&csv), "--out", s(&dir.path().join("o"))]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("line 2"), "{}", r.stderr);
}

#[test]
fn train_then_evaluate_round_trip() {
    let f = Fixture::new();
    let out = f.out("run");
    let r = f.train(&out, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for file in ["model.ckpt", "history.csv", "config.txt", "report_user.json", "report_item.json"] {
        assert!(out.join(file).is_file(), "{file}");
    }
    assert!(read(&out.join("history.csv")).starts_with("epoch,L_i,L_e,L_p,L_total,val_auc\n"));

    let eval_out = f.out("eval");
    let ckpt = out.join("model.ckpt");
    let r = ok(&["evaluate", "--config", s(&f.config), "--checkpoint", s(&ckpt), "--out", s(&eval_out)]);
    let printed: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(printed.as_array().map(Vec::len), Some(2));
    for file in ["report_user.json", "report_item.json"] {
        assert_eq!(read(&out.join(file)), read(&eval_out.join(file)), "{file}");
    }

    let r = ok(&["evaluate", "--config", s(&f.config), "--checkpoint", s(&ckpt), "--out", s(&eval_out), "--centricity", "item"]);
    let printed: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(printed["centricity"], "item");
}

#[test]
fn evaluate_rejects_missing_and_mismatched_checkpoints() {
    let f = Fixture::new();
    let missing = f.out("nowhere/model.ckpt");
    let r = dcn(&["evaluate", "--config", s(&f.config), "--checkpoint", s(&missing), "--out", s(&f.out("e"))]);
    assert_eq!(r.code, 4);
    assert!(r.stderr.contains(s(&missing)), "{}", r.stderr);

    let out = f.out("run");
    assert_eq!(f.train(&out, &[]).code, 0);
    let ckpt = out.join("model.ckpt");
    let r = dcn(&["evaluate", "--config", s(&f.config), "--checkpoint", s(&ckpt), "--out", s(&f.out("e")), "--embed-dim", "4"]);
    assert_eq!(r.code, 4);
    assert!(r.stderr.contains("user_embedding"), "{}", r.stderr);
    let r = dcn(&["evaluate", "--config", s(&f.config), "--checkpoint", s(&ckpt), "--out", s(&f.out("e")), "--max-seq-len", "6"]);
    assert_eq!(r.code, 4, "{}", r.stderr);
}

#[test]
fn echoed_config_reproduces_the_run() {
    let f = Fixture::new();
    let first = f.out("first");
    assert_eq!(f.train(&first, &["--seed", "5"]).code, 0);
    let second = f.out("second");
    let echoed = first.join("config.txt");
    ok(&["train", "--config", s(&echoed), "--out", s(&second)]);
    for file in ["history.csv", "report_user.json", "report_item.json"] {
        assert_eq!(read(&first.join(file)), read(&second.join(file)), "{file}");
    }
}

#[test]
fn switched_off_train_matches_the_ablation_row() {
    let f = Fixture::new();
    let plain = f.out("plain");
    assert_eq!(f.train(&plain, &["--lambda-e", "0", "--lambda-p", "0"]).code, 0);
    let abl = f.out("ablate");
    ok(&["ablate", "--config", s(&f.config), "--out", s(&abl)]);
    let table = read(&abl.join("ablation.csv"));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("true,true,0,"));
    let off = lines[4];
    assert!(off.starts_with("false,false,0,"), "{off}");
    let user: serde_json::Value = serde_json::from_str(&read(&plain.join("report_user.json"))).unwrap();
    let auc = off.split(',').nth(4).unwrap();
    assert_eq!(auc.parse::<f64>().unwrap(), user["auc"].as_f64().unwrap());
    let json: serde_json::Value = serde_json::from_str(&read(&abl.join("ablation.json"))).unwrap();
    assert!(json.as_array().unwrap().iter().all(|row| row["seed"] == 0));
}

#[test]
fn sweep_emits_one_row_per_grid_value() {
    let f = Fixture::new();
    let out = f.out("sweep");
    ok(&["sweep", "--config", s(&f.config), "--out", s(&out), "--grid", "1e-6,1e-5,1e-4,1e-3", "--epochs-max", "1", "--seed", "3"]);
    let table = read(&out.join("sweep.csv"));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("lambda_cl,seed,epochs,"));
    for (line, lambda) in lines[1..].iter().zip(["0.000001", "0.00001", "0.0001", "0.001"]) {
        assert!(line.starts_with(&format!("{lambda},3,")), "{line}");
    }
    assert!(out.join("sweep.json").is_file());
}

#[test]
fn attention_backbone_trains() {
    let f = Fixture::new();
    let out = f.out("attn");
    let r = f.train(&out, &["--backbone", "attention", "--epochs-max", "1"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(read(&out.join("config.txt")).contains("backbone=attention"));
}

#[test]
fn non_finite_training_exits_with_the_numeric_code() {
    let f = Fixture::new();
    let r = f.train(&f.out("boom"), &["--lr", "1e300", "--precision", "f64"]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.contains("batch"), "{}", r.stderr);
}

#[test]
fn selftest_passes_and_catches_an_injected_fault() {
    let r = ok(&["selftest"]);
    assert!(r.stdout.contains("selftest ok"));
    assert!(r.stdout.contains("gradient"));
    let r = dcn(&["selftest", "--inject-fault", "matmul"]);
    assert_eq!(r.code, 1);
    assert!(r.stdout.contains("matmul"), "{}", r.stdout);
}

#[test]
fn bad_flags_and_keys_are_input_errors() {
    assert_eq!(dcn(&["train", "--no-such-flag"]).code, 2);
    assert_eq!(dcn(&["train", "--lr", "fast"]).code, 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "embed_dims=8\n").unwrap();
    let r = dcn(&["train", "--config", s(&cfg)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("embed_dims"), "{}", r.stderr);
    let r = dcn(&["train", "--out", s(&dir.path().join("o")), "--data", s(&dir.path().join("absent"))]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}
