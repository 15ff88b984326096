use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rxnctx_core::numerics::load_checkpoint;
use tempfile::TempDir;

const SMALL: &str = r#"{"epochs":2,"encoder":{"kind":"gin","hidden_dim":12,"layers":2}}"#;
const SMALL_FREE: &str = r#"{"epochs":2,"use_context":false,"encoder":{"kind":"gin","hidden_dim":12,"layers":2}}"#;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Copies fixtures into a scratch dir so `.rejected` files land there.
fn workdir(files: &[&str]) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in files {
        fs::copy(data(f), dir.path().join(f)).unwrap();
    }
    dir
}

fn rxnctx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rxnctx"))
        .current_dir(dir)
        .env_remove("REMO_LOG_LEVEL")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = rxnctx(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn pretrain_pair(dir: &Path) {
    fs::write(dir.join("p.json"), SMALL).unwrap();
    fs::write(dir.join("q.json"), SMALL_FREE).unwrap();
    ok(dir, &["pretrain", "--in", "desk.rsmi", "--out", "p", "--config", "p.json"]);
    ok(dir, &["pretrain", "--in", "desk.rsmi", "--out", "q", "--config", "q.json", "--vocab", "p/vocab.json"]);
}

fn same_bytes(a: &Path, b: &Path) {
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{} differs from {}", a.display(), b.display());
}

#[test]
fn finkelstein_centre() {
    let dir = workdir(&["finkelstein.rsmi"]);
    ok(dir.path(), &["detect-centres", "--in", "finkelstein.rsmi", "--out", "c.jsonl"]);
    let line = fs::read_to_string(dir.path().join("c.jsonl")).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(
        v["pairs"],
        serde_json::json!([
            {"i": 1, "j": 2, "before": "single", "after": null},
            {"i": 1, "j": 3, "before": null, "after": "single"},
        ])
    );
    assert!(dir.path().join("c.jsonl.meta.json").is_file());
    let rejected = fs::read_to_string(dir.path().join("finkelstein.rsmi.rejected")).unwrap();
    assert_eq!(rejected.lines().count(), 1);
}

#[test]
fn centre_token_counts() {
    let dir = workdir(&["two_reactions.rsmi"]);
    ok(dir.path(), &["stats", "--in", "two_reactions.rsmi", "--out", "s.csv", "--restrict", "centres"]);
    let text = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut rows: Vec<(String, u64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<_> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap())
        })
        .collect();
    rows.sort();
    let want = [("Br[-]", 1), ("C[--=]", 1), ("C[-]", 1), ("I[]", 1), ("O[-]", 2)];
    assert_eq!(rows, want.map(|(t, c)| (t.to_string(), c)).to_vec());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = workdir(&["desk.rsmi", "centres.rsmi", "two_reactions.rsmi"]);
    let d = dir.path();
    pretrain_pair(d);
    for run in ["a", "b"] {
        ok(d, &["detect-centres", "--in", "desk.rsmi", "--out", &format!("{run}/c.jsonl")]);
        ok(d, &["stats", "--in", "two_reactions.rsmi", "--out", &format!("{run}/s.csv")]);
        ok(
            d,
            &[
                "entropy", "--in", "centres.rsmi", "--out", &format!("{run}/ent"),
                "--conditional", "p/checkpoint.json", "--unconditional", "q/checkpoint.json",
            ],
        );
        ok(
            d,
            &[
                "export-grid", "--in", "centres.rsmi", "--out", &format!("{run}/grid.csv"),
                "--checkpoint", "p/checkpoint.json", "--example", "3", "--position", "0",
            ],
        );
    }
    for f in [
        "c.jsonl", "c.jsonl.meta.json", "s.csv", "s.csv.meta.json", "ent/entropy.json",
        "ent/histogram.csv", "ent/histogram.csv.meta.json", "grid.csv", "grid.json",
    ] {
        same_bytes(&d.join("a").join(f), &d.join("b").join(f));
    }
}

#[test]
fn pretrain_reruns_match() {
    let dir = workdir(&["desk.rsmi"]);
    let d = dir.path();
    fs::write(d.join("p.json"), SMALL).unwrap();
    for out in ["a", "b"] {
        ok(d, &["pretrain", "--in", "desk.rsmi", "--out", out, "--config", "p.json"]);
    }
    for f in ["metrics.jsonl", "checkpoint.json", "checkpoint.bin", "vocab.json"] {
        same_bytes(&d.join("a").join(f), &d.join("b").join(f));
    }
}

#[test]
fn zero_epochs_keep_init_values() {
    let dir = workdir(&["desk.rsmi"]);
    let d = dir.path();
    fs::write(d.join("p.json"), SMALL).unwrap();
    ok(d, &["pretrain", "--in", "desk.rsmi", "--out", "p", "--config", "p.json"]);
    ok(
        d,
        &[
            "pretrain", "--in", "desk.rsmi", "--out", "z", "--config", "p.json",
            "--epochs", "0", "--init-checkpoint", "p/checkpoint.json",
        ],
    );
    let a = load_checkpoint::<f32>(&d.join("p/checkpoint.json")).unwrap();
    let b = load_checkpoint::<f32>(&d.join("z/checkpoint.json")).unwrap();
    assert!(a.store.values_equal(&b.store));
}

#[test]
fn finetune_leaves_checkpoint_untouched() {
    let dir = workdir(&["desk.rsmi", "aromatic.csv"]);
    let d = dir.path();
    fs::write(d.join("p.json"), SMALL).unwrap();
    ok(d, &["pretrain", "--in", "desk.rsmi", "--out", "p", "--config", "p.json"]);
    let before = (fs::read(d.join("p/checkpoint.json")).unwrap(), fs::read(d.join("p/checkpoint.bin")).unwrap());
    ok(
        d,
        &[
            "finetune-reg", "--in", "aromatic.csv", "--out", "f",
            "--init-checkpoint", "p/checkpoint.json", "--epochs", "2",
        ],
    );
    let after = (fs::read(d.join("p/checkpoint.json")).unwrap(), fs::read(d.join("p/checkpoint.bin")).unwrap());
    assert!(before == after);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(d.join("f/report.json")).unwrap()).unwrap();
    assert!(report["metrics"]["rmse"].is_number());
    assert!(report["run"]["config_hash"].is_string());
}

#[test]
fn reaction_type_defaults_to_graphormer() {
    let dir = workdir(&["rxn_types.csv"]);
    ok(dir.path(), &["finetune-rxn", "--in", "rxn_types.csv", "--out", "f", "--epochs", "1"]);
    let out = rxnctx(dir.path(), &["finetune-rxn", "--in", "rxn_types.csv", "--out", "g", "--encoder", "gin"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let dir = workdir(&["desk.rsmi"]);
    let d = dir.path();
    assert_eq!(rxnctx(d, &["ingest", "--in", "missing.rsmi", "--out", "x"]).status.code(), Some(1));
    fs::write(d.join("bad.json"), r#"{"bogus": 1}"#).unwrap();
    let out = rxnctx(d, &["ingest", "--in", "desk.rsmi", "--out", "x", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    assert_eq!(rxnctx(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(rxnctx(d, &["--help"]).status.code(), Some(0));
    let out = Command::new(env!("CARGO_BIN_EXE_rxnctx"))
        .current_dir(d)
        .env("REMO_LOG_LEVEL", "verbose")
        .args(["ingest", "--in", "desk.rsmi", "--out", "x"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = rxnctx(
        d,
        &["export-grid", "--in", "desk.rsmi", "--out", "g.csv", "--checkpoint", "none.json"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_writes_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("mixed.rsmi"), "[CH3:1][Br:2].[I-:3]>>[CH3:1][I:3].[Br-:2]\nnot a reaction\n").unwrap();
    ok(d, &["ingest", "--in", "mixed.rsmi", "--out", "i.jsonl"]);
    assert_eq!(fs::read_to_string(d.join("i.jsonl")).unwrap().lines().count(), 1);
    let rejected = fs::read_to_string(d.join("mixed.rsmi.rejected")).unwrap();
    let lines: Vec<_> = rejected.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("2\t"));
}
