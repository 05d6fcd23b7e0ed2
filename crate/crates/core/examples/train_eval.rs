//! One-vs-all training and inference on the analog classifier.
//!
//! ```text
//! cargo run --release --example train_eval -- [mnist.csv [train_rows [test_rows]]]
//! ```
//!
//! With a CSV the first `train_rows` rows train every circuit and the next
//! `test_rows` are scored. Without one it runs the two-class toy set.

use capnet::cells::NetworkTopology;
use capnet::data::{open_mnist_csv, preprocess, Sample};
use capnet::learning::{
    evaluate, respond_all, toy_set, train_all, Classifier, FeedbackRule, HarnessConfig, ResponseUnit,
};
use capnet::mcu::format_duration;
use capnet::report::matrix_svg;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (train, test, classes): (Vec<Sample>, Vec<Sample>, Vec<u8>) = match args.first() {
        Some(csv) => {
            let n_train = args.get(1).map_or(Ok(200), |s| s.parse())?;
            let n_test = args.get(2).map_or(Ok(50), |s| s.parse())?;
            let all = open_mnist_csv(csv.as_ref())?
                .take(n_train + n_test)
                .map(|r| r.map(|r| preprocess(&r)))
                .collect::<Result<Vec<_>, _>>()?;
            let (a, b) = all.split_at(n_train.min(all.len()));
            (a.to_vec(), b.to_vec(), (0..10).collect())
        }
        None => (toy_set(20, 3, 1), toy_set(10, 3, 2), vec![0, 1]),
    };
    println!("{} training rows, {} test rows, {} circuits", train.len(), test.len(), classes.len());

    let topology = NetworkTopology::default();
    let cfg = HarnessConfig::default();
    let outcomes = train_all(&classes, &train, &topology, Some(&FeedbackRule::default()), &cfg)?;
    let elapsed: f64 = outcomes.iter().map(|o| o.elapsed).sum();
    for o in &outcomes {
        let v: Vec<String> = o.state.voltages().take(5).map(|v| format!("{v:.2}")).collect();
        println!("class {}: first weights [{} ...] V", o.state.class_id, v.join(", "));
    }
    println!("training time on the board: {}", format_duration(elapsed));

    let states: Vec<_> = outcomes.into_iter().map(|o| o.state).collect();
    let classifier = Classifier::new(&topology)?;
    let unit = ResponseUnit::Amperes;
    let (mut rows, seconds) = respond_all(&classifier, &test, &states, &cfg, unit)?;
    // the toy run has two circuits; pad with a current no circuit can
    // source so the ten-way scorer ranks the padding last
    for r in &mut rows {
        r.responses.resize(10, -1.0);
    }
    let (matrix, metrics) = evaluate(&rows, None, unit.name())?;
    println!("inference time on the board: {}", format_duration(seconds));
    println!("top-1 {:.3}, top-3 {:.3} over {} samples", metrics.top1, metrics.top3, metrics.n_eval);

    let svg = std::env::temp_dir().join("capnet_matrix.svg");
    std::fs::write(&svg, matrix_svg(&matrix))?;
    println!("result matrix → {}", svg.display());
    Ok(())
}
