use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sentstruct"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = run(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SMALL_TRAIN: &[&str] = &[
    "train", "--data", "c.seb", "--out", "m.sdh", "--epochs", "1", "--batch", "4", "--layers", "1", "--heads", "2",
    "--m", "6", "--seed", "5",
];

fn small_corpus(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "synth", "--docs", "24", "--dim", "8", "--m", "6", "--rho-machine", "0.8", "--rho-human", "0.2", "--seed",
        "2", "--out", "c.seb",
    ];
    args.extend_from_slice(extra);
    ok(&args, dir);
}

#[test]
fn synth_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["synth", "--docs", "10", "--dim", "8", "--m", "8", "--rho-machine", "0.8", "--rho-human", "0.2", "--seed", "1", "--out", "t.seb"],
        dir.path(),
    );
    let text = ok(&["inspect", "--data", "t.seb"], dir.path());
    assert!(text.contains("docs: 10\n"), "{text}");
    assert!(text.contains("  human: 5\n") && text.contains("  machine: 5\n"), "{text}");
    assert!(text.contains("dim: 8\n"));
    assert!(text.contains("  original: 10\n"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["synth", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = run(&["synth", "--docs", "4", "--dim", "8", "--rho-machine", "0.1", "--rho-human", "0.5", "--out", "x.seb"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.seb"), b"not a corpus").unwrap();
    let out = run(&["inspect", "--data", "junk.seb"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["inspect", "--data", "missing.seb"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn empty_translation_task_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), &[]);
    ok(SMALL_TRAIN, dir.path());
    let out = run(&["eval", "--data", "c.seb", "--ckpt", "m.sdh", "--task", "translation", "--out", "r.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("EmptySelection"));
}

#[test]
fn train_writes_history_next_to_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), &[]);
    ok(SMALL_TRAIN, dir.path());
    let hist = std::fs::read_to_string(dir.path().join("m.history.jsonl")).unwrap();
    let lines: Vec<Value> = hist.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    // 24 originals, batch 4, one epoch
    assert_eq!(lines.iter().filter(|v| v["kind"] == "step").count(), 6);
    assert_eq!(lines.iter().filter(|v| v["kind"] == "epoch").count(), 1);
    assert!(lines[0]["clipped_norm"].as_f64().unwrap() <= 1.0 + 1e-6);
}

#[test]
fn by_domain_counts_sum_to_task_count() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), &["--variants", "--nuisance", "0.5"]);
    ok(SMALL_TRAIN, dir.path());
    for task in ["hc3", "substitution", "any"] {
        ok(&["eval", "--data", "c.seb", "--ckpt", "m.sdh", "--task", task, "--by-domain", "--out", "r.json"], dir.path());
        let r: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
        let total = r["tasks"][task]["n"].as_u64().unwrap();
        let per: u64 = r["per_domain"].as_object().unwrap().values().map(|m| m["n"].as_u64().unwrap()).sum();
        assert_eq!(per, total, "{task}");
        assert_eq!(r["per_domain"].as_object().unwrap().len(), 4);
    }
    ok(&["eval", "--data", "c.seb", "--ckpt", "m.sdh", "--out", "all.json"], dir.path());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("all.json")).unwrap()).unwrap();
    let tasks: Vec<&String> = r["tasks"].as_object().unwrap().keys().collect();
    assert_eq!(tasks, ["any", "hc3", "substitution"]);
    assert_eq!(r["per_domain"], serde_json::json!({}));
    assert_eq!(r["tasks"]["any"]["n"], 48);
}

#[test]
fn classify_toy_and_seb_modes() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), &[]);
    ok(SMALL_TRAIN, dir.path());
    std::fs::write(
        dir.path().join("in.jsonl"),
        "{\"id\":\"a\",\"text\":\"One sentence. Another one! A third?\"}\n{\"id\":\"b\",\"text\":\"Short.\"}\n",
    )
    .unwrap();
    ok(&["classify", "--ckpt", "m.sdh", "--input", "in.jsonl", "--embedder", "toy:7", "--out", "p.jsonl"], dir.path());
    let first = std::fs::read_to_string(dir.path().join("p.jsonl")).unwrap();
    let preds: Vec<Value> = first.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(preds.len(), 2);
    for p in &preds {
        let prob = p["p_machine"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&prob));
        assert_eq!(p["label"].as_u64().unwrap(), u64::from(prob >= 0.5));
    }
    ok(&["classify", "--ckpt", "m.sdh", "--input", "in.jsonl", "--embedder", "toy:7", "--out", "p.jsonl"], dir.path());
    assert_eq!(std::fs::read_to_string(dir.path().join("p.jsonl")).unwrap(), first);

    std::fs::write(dir.path().join("ids.jsonl"), "{\"id\":\"synth-000003\"}\n").unwrap();
    ok(&["classify", "--ckpt", "m.sdh", "--input", "ids.jsonl", "--embedder", "seb:c.seb", "--out", "q.jsonl"], dir.path());
    let q: Value = serde_json::from_str(std::fs::read_to_string(dir.path().join("q.jsonl")).unwrap().trim()).unwrap();
    assert_eq!(q["id"], "synth-000003");

    std::fs::write(dir.path().join("blank.jsonl"), "{\"id\":\"x\",\"text\":\"   \"}\n").unwrap();
    let out = run(&["classify", "--ckpt", "m.sdh", "--input", "blank.jsonl", "--embedder", "toy:7", "--out", "p.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["classify", "--ckpt", "m.sdh", "--input", "in.jsonl", "--embedder", "bert", "--out", "p.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resume_from_checkpoint_and_lr_zero() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), &[]);
    ok(SMALL_TRAIN, dir.path());
    ok(&["train", "--data", "c.seb", "--out", "m2.sdh", "--init", "m.sdh", "--lr", "0", "--epochs", "1", "--nie-sign", "+1"], dir.path());
    let a = sentstruct::checkpoint::load(dir.path().join("m.sdh")).unwrap();
    let b = sentstruct::checkpoint::load(dir.path().join("m2.sdh")).unwrap();
    assert_eq!(a, b);
}
