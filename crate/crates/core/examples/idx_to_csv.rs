//! Converts the original MNIST IDX files to MNIST-in-CSV.
//!
//! ```text
//! cargo run --release --example idx_to_csv -- data/idx data
//! ```
//!
//! Reads `train-images-idx3-ubyte` / `train-labels-idx1-ubyte` and the
//! `t10k-*` pair from the first directory and writes `mnist_train.csv` and
//! `mnist_test.csv` into the second.

use std::path::PathBuf;

use capnet::data::{load_idx_pair, write_mnist_csv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let src = PathBuf::from(args.first().map(String::as_str).unwrap_or("data/idx"));
    let dst = PathBuf::from(args.get(1).map(String::as_str).unwrap_or("data"));
    std::fs::create_dir_all(&dst)?;
    for (prefix, name) in [("train", "mnist_train.csv"), ("t10k", "mnist_test.csv")] {
        let recs = load_idx_pair(
            &src.join(format!("{prefix}-images-idx3-ubyte")),
            &src.join(format!("{prefix}-labels-idx1-ubyte")),
        )?;
        let n = write_mnist_csv(&recs, &dst.join(name))?;
        println!("{}: {n} records", dst.join(name).display());
    }
    Ok(())
}
