//! MNIST CSV → 5×5 samples → the `inputs.txt` / `labels.txt` pair the
//! microcontroller reads from its SD card.
//!
//! ```text
//! cargo run --example preprocess -- [mnist.csv] [out_dir]
//! ```
//!
//! Without arguments it uses the eight-row test fixture and a temp dir.

use std::path::PathBuf;

use capnet::data::{export_sd_text, load_sd_text, open_mnist_csv, preprocess, DatasetFiles, SAMPLE_SIDE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let csv = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mnist_small.csv"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("capnet_preprocess"));
    std::fs::create_dir_all(&out)?;

    let samples = open_mnist_csv(&csv)?
        .map(|r| r.map(|r| preprocess(&r)))
        .collect::<Result<Vec<_>, _>>()?;
    let files = export_sd_text(&samples, &out.join("inputs.txt"), &out.join("labels.txt"))?;
    println!("{} rows → {}", files.count, out.display());

    if let Some(s) = samples.first() {
        println!("first sample, label {}:", s.label);
        for row in s.values.chunks(SAMPLE_SIDE) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>4}")).collect();
            println!("  {}", cells.join(""));
        }
    }
    let back = load_sd_text(&DatasetFiles::in_dir(&out))?;
    assert_eq!(back, samples);
    println!("read back identical");
    Ok(())
}
