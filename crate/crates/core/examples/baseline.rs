//! The dense software network the analog circuits are compared against.
//!
//! ```text
//! cargo run --release --example baseline -- [mnist.csv [train_rows [test_rows]]]
//! ```

use std::time::Instant;

use capnet::data::{open_mnist_csv, preprocess, Sample};
use capnet::learning::{baseline_eval, baseline_train, toy_set, BaselineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (train, test): (Vec<Sample>, Vec<Sample>) = match args.first() {
        Some(csv) => {
            let n_train = args.get(1).map_or(Ok(10_000), |s| s.parse())?;
            let n_test = args.get(2).map_or(Ok(1_000), |s| s.parse())?;
            let all = open_mnist_csv(csv.as_ref())?
                .take(n_train + n_test)
                .map(|r| r.map(|r| preprocess(&r)))
                .collect::<Result<Vec<_>, _>>()?;
            let (a, b) = all.split_at(n_train.min(all.len()));
            (a.to_vec(), b.to_vec())
        }
        None => (toy_set(200, 3, 1), toy_set(50, 3, 2)),
    };

    let cfg = BaselineConfig::default();
    let start = Instant::now();
    let model = baseline_train(&train, &cfg)?;
    let secs = start.elapsed().as_secs_f64();
    println!(
        "25-{}-10 network, {} parameters, {} epochs on {} rows in {secs:.2} s",
        cfg.hidden,
        model.param_count(),
        cfg.epochs,
        train.len()
    );
    let m = baseline_eval(&model, &test)?;
    println!("top-1 {:.3}, top-3 {:.3} over {} samples", m.top1, m.top3, m.n_eval);
    Ok(())
}
