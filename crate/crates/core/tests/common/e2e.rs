//! Drives the `remixer` binary through synth-data, train and eval.

use std::path::Path;
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_remixer"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

pub fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub const SMALL_TRAIN: &str = r#"
[model]
n_filters = 16
kernel_len = 8
stride = 4
bottleneck = 8
hidden = 16
blocks = 2
repeats = 1

[train]
batch_size = 4
max_epochs = 2
patience = 2
segment_s = 0.5
seed = 3
"#;

/// Full pipeline in `dir`; returns the bytes of `records.csv`.
pub fn pipeline(dir: &Path, variant: &str) -> Vec<u8> {
    let p = |s: &str| dir.join(s).to_string_lossy().into_owned();
    std::fs::write(dir.join("train.toml"), SMALL_TRAIN).unwrap();
    ok(&[
        "synth-data", "--k", "2", "--out", &p("data"), "--seed", "5", "--n-train", "4", "--n-val", "2",
        "--n-test", "2", "--duration-s", "1.0",
    ]);
    ok(&[
        "train", "--config", &p("train.toml"), "--data", &p("data"), "--out", &p("run"), "--variant", variant,
    ]);
    ok(&["eval", "--checkpoint", &p("run/checkpoint.json"), "--data", &p("data"), "--out", &p("eval")]);
    std::fs::read(dir.join("eval/records.csv")).unwrap()
}
