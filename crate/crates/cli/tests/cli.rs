//! Exit codes, locking and reproducibility of the `mtaf` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mtaf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtaf"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Synthetic data, the shipped config and a fitted vocabulary.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::create_dir_all(root.join("configs")).unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml");
    fs::copy(config, root.join("configs/synthetic.toml")).unwrap();
    assert!(mtaf(&["make-synthetic", "--out", "data"], root).status.success());
    let fit = mtaf(
        &["fit-vocab", "--config", "configs/synthetic.toml", "--out", "vocab.txt"],
        root,
    );
    assert!(fit.status.success(), "{}", stderr(&fit));
    dir
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mtaf(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(mtaf(&["--version"], dir.path()).status.code(), Some(0));
}

#[test]
fn missing_input_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mtaf(&["fit-vocab", "--config", "nowhere.toml", "--out", "v.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("nowhere.toml"));
}

#[test]
fn invalid_config_is_usage_error() {
    let ws = workspace();
    let root = ws.path();
    for bad in [
        "train.learning_rate=-1.0",
        "model.colour=3",
        "protocol.samples_per_context=0",
    ] {
        let out = mtaf(
            &[
                "fit-vocab",
                "--config",
                "configs/synthetic.toml",
                "--set",
                bad,
                "--out",
                "v2.txt",
            ],
            root,
        );
        assert_eq!(out.status.code(), Some(1), "{bad}: {}", stderr(&out));
    }
}

#[test]
fn held_lock_is_refused() {
    let ws = workspace();
    let root = ws.path();
    fs::create_dir_all(root.join("m")).unwrap();
    fs::write(root.join("m/train.lock"), "").unwrap();
    let out = mtaf(
        &[
            "train",
            "--config",
            "configs/synthetic.toml",
            "--vocab",
            "vocab.txt",
            "--out",
            "m",
            "--epochs",
            "1",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("locked"), "{}", stderr(&out));
    assert!(!root.join("m/checkpoint.mtaf").exists());
}

#[test]
fn generation_is_reproducible_and_training_needs_ed_data() {
    let ws = workspace();
    let root = ws.path();
    let cfg = ["--config", "configs/synthetic.toml"];
    let train = [
        &["train"],
        &cfg[..],
        &["--vocab", "vocab.txt", "--out", "m", "--epochs", "2"],
    ]
    .concat();
    let out = mtaf(&train, root);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(!root.join("m/train.lock").exists());
    for file in ["g1.jsonl", "g2.jsonl"] {
        let args = [
            &["generate"],
            &cfg[..],
            &["--vocab", "vocab.txt", "--model", "m", "--out", file],
        ]
        .concat();
        let out = mtaf(&args, root);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let first = fs::read(root.join("g1.jsonl")).unwrap();
    assert_eq!(first, fs::read(root.join("g2.jsonl")).unwrap());
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 90);

    let text = fs::read_to_string(root.join("configs/synthetic.toml")).unwrap();
    let rdg_only: String = text
        .lines()
        .filter(|l| !l.starts_with("ed =") && !l.starts_with("labels ="))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(root.join("configs/rdg_only.toml"), rdg_only).unwrap();
    let args = [
        "train",
        "--config",
        "configs/rdg_only.toml",
        "--vocab",
        "vocab.txt",
        "--out",
        "m2",
        "--plan",
        "ed-rdg",
    ];
    let out = mtaf(&args, root);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn single_level_grid_falls_back_to_one_way() {
    let ws = workspace();
    let root = ws.path();
    let out = mtaf(
        &[
            "experiment",
            "--config",
            "configs/synthetic.toml",
            "--set",
            "train.epochs=3",
            "--out",
            "run",
            "--variants",
            "multitask",
            "--plans",
            "rdg",
        ],
        root,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let analysis: serde_json::Value =
        serde_json::from_slice(&fs::read(root.join("run/analysis.json")).unwrap()).unwrap();
    let typ = &analysis["measures"][0];
    assert_eq!(typ["measure"], "typicality");
    assert_eq!(typ["design"], "one-way");
    let notes = typ["notes"].to_string();
    assert!(notes.contains("two-way ANOVA refused"), "{notes}");
}
