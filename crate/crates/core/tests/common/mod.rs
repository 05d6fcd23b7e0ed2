#![allow(dead_code)]

use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Directory holding `mnist_train.csv` / `mnist_test.csv`: `$CAPNET_DATA` or
/// `<workspace>/data`.
pub fn data_dir() -> PathBuf {
    std::env::var_os("CAPNET_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

pub fn mnist_csv(name: &str) -> Option<PathBuf> {
    let p = data_dir().join(name);
    if p.exists() {
        Some(p)
    } else {
        eprintln!("SKIP: {} not found (see README for fetching MNIST)", p.display());
        None
    }
}
