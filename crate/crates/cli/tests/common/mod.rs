#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn univec(args: &[&str]) -> Output {
    univec_stdin(args, "")
}

pub fn univec_stdin(args: &[&str], input: &str) -> Output {
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let argv = std::iter::once("univec").chain(args.iter().copied());
    let code = univec_cli::run(argv, &mut input.as_bytes(), &mut stdout, &mut stderr);
    Output {
        code,
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
    }
}

pub fn toy_data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/spa_eng_toy.tsv")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small, fast settings that still overfit the toy corpus.
pub const OVERFIT_FLAGS: [&str; 12] = [
    "--epochs", "300", "--batch", "8", "--hidden", "64", "--embed", "32", "--lr", "5e-3", "--seed", "3",
];

pub fn train_overfit(out: &Path) -> Output {
    let data = toy_data();
    let mut args = vec!["train", "--data", s(&data), "--lang-a", "en", "--lang-b", "es", "--out", s(out)];
    args.extend(OVERFIT_FLAGS);
    univec(&args)
}
