//! The five batch commands behind the `capnet` binary. Each reads a
//! [`RunConfig`], writes its artifacts under `cfg.out` and a
//! `manifest_<command>.txt` listing inputs, artifact hashes and seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::cells::{build_cascade, build_module1, probe_cell, single_cell_current, single_layer_fit_residual, CellError, FitSearch};
use crate::circuit::{transient_solve, CircuitError, TransientConfig, Waveform, GROUND};
use crate::config::{sha256_hex, ConfigError, Manifest, RunConfig};
use crate::data::{export_sd_text, load_sd_text, open_mnist_csv, preprocess, DataError, DatasetFiles, Sample};
use crate::learning::{
    baseline_eval, baseline_offsets, baseline_train, evaluate, respond_all, train_all, Classifier, LearningError, Metrics,
    WeightState, CLASSES,
};
use crate::mcu::{estimate_runtime, measurements_to_csv, McuError, RuntimeBreakdown, WorkloadSpec};
use crate::report::{compare_report, line_plot_svg, matrix_svg, resistive_energy, timing_svg, RunSummary, Series};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Mcu(#[from] McuError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("missing input `{0}`; run the command that produces it first")]
    MissingInput(PathBuf),
}

impl CommandError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            CommandError::Config(_) => "config",
            CommandError::Data(_) => "data",
            CommandError::Cell(_) | CommandError::Circuit(_) => "circuit",
            CommandError::Mcu(_) => "mcu",
            CommandError::Learning(_) => "learning",
            CommandError::Io { .. } => "io",
            CommandError::MissingInput(_) => "missing_input",
        }
    }
}

type Result<T> = std::result::Result<T, CommandError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(CommandError::MissingInput(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(io_err(path))
}

/// Progress lines go to stderr unless quiet.
pub struct Log {
    pub quiet: bool,
}

impl Log {
    pub fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Collects artifacts for the manifest as they are written.
struct Outputs {
    dir: PathBuf,
    manifest: Manifest,
}

impl Outputs {
    fn new(command: &str, cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
        Ok(Self {
            dir: cfg.out.clone(),
            manifest: Manifest::new(command, cfg),
        })
    }

    fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, contents).map_err(io_err(&path))?;
        self.manifest.artifacts.push((rel.to_string(), sha256_hex(contents)));
        Ok(())
    }

    /// Written file that depends on the wall clock.
    fn write_volatile(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        fs::write(&path, contents).map_err(io_err(&path))?;
        self.manifest.volatile.push(rel.to_string());
        Ok(())
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.input(path).map_err(io_err(path))
    }

    fn finish(self) -> Result<Manifest> {
        let path = self.dir.join(format!("manifest_{}.txt", self.manifest.command));
        fs::write(&path, self.manifest.render()).map_err(io_err(&path))?;
        Ok(self.manifest)
    }
}

/// Rows from an MNIST CSV (preprocessed on the fly) or from a directory
/// holding `inputs.txt` and `labels.txt`. `limit` 0 reads everything.
pub fn load_samples(path: &Path, limit: usize) -> Result<Vec<Sample>> {
    if !path.exists() {
        return Err(CommandError::MissingInput(path.to_path_buf()));
    }
    let take = if limit == 0 { usize::MAX } else { limit };
    if path.is_dir() {
        let mut v = load_sd_text(&DatasetFiles::in_dir(path))?;
        v.truncate(take);
        return Ok(v);
    }
    open_mnist_csv(path)?
        .take(take)
        .map(|r| Ok(preprocess(&r?)))
        .collect()
}

fn inputs_of(path: &Path) -> Vec<PathBuf> {
    if path.is_dir() {
        let f = DatasetFiles::in_dir(path);
        vec![f.inputs_path, f.labels_path]
    } else {
        vec![path.to_path_buf()]
    }
}

/// Training and test CSVs to `train/` and `test/` SD-card text files. The
/// test set is skipped when its file is absent.
pub fn cmd_preprocess(cfg: &RunConfig, log: &Log) -> Result<Manifest> {
    let mut out = Outputs::new("preprocess", cfg)?;
    for (split, path, required) in [("train", &cfg.train_data, true), ("test", &cfg.test_data, false)] {
        if !path.exists() {
            if required {
                return Err(CommandError::MissingInput(path.clone()));
            }
            log.say(format!("{}: not found, skipping the {split} split", path.display()));
            continue;
        }
        out.input(path)?;
        let samples = load_samples(path, 0)?;
        let dir = cfg.out.join(split);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let files = export_sd_text(&samples, &dir.join("inputs.txt"), &dir.join("labels.txt"))?;
        for p in [&files.inputs_path, &files.labels_path] {
            let bytes = fs::read(p).map_err(io_err(p))?;
            let rel = format!("{split}/{}", p.file_name().unwrap_or_default().to_string_lossy());
            out.manifest.artifacts.push((rel, sha256_hex(&bytes)));
        }
        log.say(format!("{split}: {} rows", files.count));
    }
    out.finish()
}

fn decimate(x: &[f64], every: usize) -> Vec<f64> {
    x.iter().step_by(every.max(1)).copied().collect()
}

/// Single-cell step response with its resistive energy, and the two-cell
/// cascade against the best single-cell fit.
pub fn cmd_trace(cfg: &RunConfig, log: &Log) -> Result<Manifest> {
    let mut out = Outputs::new("trace", cfg)?;
    let cell = cfg.input_cell();
    let tc = TransientConfig {
        dt: cfg.trace_dt,
        t_end: cfg.trace_t_end,
        integrator: cfg.integrator,
        rng_seed: cfg.seed,
        ..TransientConfig::default()
    };
    let step = Waveform::Step {
        before: 0.0,
        after: cfg.supply,
        at: 0.0,
    };

    let mut net = build_module1("M1", &cell, "in", "out")?;
    net.source("V", "in", GROUND, step.clone());
    net.resistor("Rload", "out", GROUND, cfg.sense_resistor);
    probe_cell(&mut net, "M1");
    net.probe("M1.I3", "M1.R3").probe("load", "Rload");
    let trace = transient_solve(&net, &tc)?;
    out.write("cell_trace.csv", trace.to_csv().as_bytes())?;
    let energy = resistive_energy(
        &trace,
        &[("M1.I1", cell.r2), ("M1.I2", cell.r1), ("M1.I3", cell.r3), ("load", cfg.sense_resistor)],
    )
    .unwrap_or(f64::NAN);
    let every = trace.len() / 2000 + 1;
    let t_ms: Vec<f64> = decimate(&trace.times, every).iter().map(|t| t * 1e3).collect();
    let ma = |label: &str| -> Vec<f64> {
        decimate(trace.probe(label).unwrap_or(&[]), every).iter().map(|i| i * 1e3).collect()
    };
    let (i1, i2) = (ma("M1.I1"), ma("M1.I2"));
    out.write(
        "cell_trace.svg",
        line_plot_svg(
            "Weight cell under a supply step",
            "time (ms)",
            "current (mA)",
            &[
                Series { name: "capacitor branch", x: &t_ms, y: &i1 },
                Series { name: "output branch", x: &t_ms, y: &i2 },
            ],
        )
        .as_bytes(),
    )?;

    let coupling = cell.diode;
    let net = build_cascade(&cell, &cell, coupling.as_ref(), step)?;
    let trace = transient_solve(&net, &tc)?;
    let search = FitSearch {
        diode: coupling.is_some(),
        ..FitSearch::default()
    };
    let fit = single_layer_fit_residual(&trace, "in", "out", &search)?;
    let vin = trace.node("in").map(<[f64]>::to_vec).unwrap_or_default();
    let fitted = single_cell_current(&fit.params, &trace.times, &vin);
    let cascade = trace.probe("out").unwrap_or(&[]).to_vec();
    let mut csv = String::from("t,cascade,single_fit\n");
    for k in 0..trace.len() {
        let _ = writeln!(csv, "{:?},{:?},{:?}", trace.times[k], cascade[k], fitted[k]);
    }
    out.write("cascade_fit.csv", csv.as_bytes())?;
    let every = trace.len() / 2000 + 1;
    let t_ms: Vec<f64> = decimate(&trace.times, every).iter().map(|t| t * 1e3).collect();
    let c_ma: Vec<f64> = decimate(&cascade, every).iter().map(|i| i * 1e3).collect();
    let f_ma: Vec<f64> = decimate(&fitted, every).iter().map(|i| i * 1e3).collect();
    out.write(
        "cascade_fit.svg",
        line_plot_svg(
            "Two cells in series against the best single cell",
            "time (ms)",
            "output current (mA)",
            &[
                Series { name: "cascade", x: &t_ms, y: &c_ma },
                Series { name: "single-cell fit", x: &t_ms, y: &f_ma },
            ],
        )
        .as_bytes(),
    )?;
    let p = &fit.params;
    let summary = format!(
        "cell_energy_joules = {energy:?}\nfit_rms = {:?}\nfit_r1 = {:?}\nfit_r2 = {:?}\nfit_r3 = {:?}\nfit_c1 = {:?}\nfit_evaluations = {}\n",
        fit.rms, p.r1, p.r2, p.r3, p.c1, fit.evaluations
    );
    out.write("trace_summary.txt", summary.as_bytes())?;
    log.say(format!("cascade vs single cell: normalized RMS {:.3e}", fit.rms));
    out.finish()
}

fn weight_path(k: usize) -> String {
    format!("weights/class_{k}.txt")
}

/// Trains the ten class circuits on the first `train_rows` rows, writing
/// their weights, the measurement log and the accounted runtime.
pub fn cmd_train(cfg: &RunConfig, log: &Log) -> Result<Manifest> {
    let mut out = Outputs::new("train", cfg)?;
    for p in inputs_of(&cfg.train_data) {
        out.input(&p)?;
    }
    let rows = load_samples(&cfg.train_data, cfg.train_rows)?;
    let topo = cfg.topology();
    let rule = cfg.feedback_rule();
    let harness = cfg.harness();
    let classes: Vec<u8> = (0..CLASSES as u8).collect();
    log.say(format!("training {} circuits on {} rows", classes.len(), rows.len()));
    let outcomes = train_parallel(&classes, &rows, &topo, rule.as_ref(), &harness)?;
    let mut train_log = String::new();
    for (k, o) in outcomes.iter().enumerate() {
        out.write(&weight_path(k), o.state.to_text().as_bytes())?;
        for (n, line) in measurements_to_csv(&o.measurements).lines().enumerate() {
            if n == 0 && k == 0 {
                let _ = writeln!(train_log, "circuit,{line}");
            } else if n > 0 {
                let _ = writeln!(train_log, "{k},{line}");
            }
        }
        if let Some(w) = o.warning {
            log.say(format!(
                "warning: circuit {k}: {:.0}% of input capacitors saturated by row {}",
                100.0 * w.fraction,
                w.row
            ));
        }
    }
    out.write("train_log.csv", train_log.as_bytes())?;
    let workload = WorkloadSpec {
        n_classes: classes.len(),
        rows_per_class: rows.len() * cfg.epochs,
        ..cfg.workload()
    };
    let breakdown = estimate_runtime(&workload, &harness.timing);
    out.write("train_runtime.csv", breakdown.to_csv().as_bytes())?;
    log.say(format!(
        "accounted microcontroller time {}",
        crate::mcu::format_duration(breakdown.total())
    ));
    out.finish()
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// [`train_all`] with the classes spread over threads; results keep class
/// order and do not depend on the thread count.
fn train_parallel(
    classes: &[u8],
    rows: &[Sample],
    topo: &crate::cells::NetworkTopology,
    rule: Option<&crate::learning::FeedbackRule>,
    harness: &crate::learning::HarnessConfig,
) -> Result<Vec<crate::learning::TrainOutcome>> {
    let chunk = classes.len().div_ceil(workers()).max(1);
    let parts: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = classes
            .chunks(chunk)
            .map(|c| s.spawn(move || train_all(c, rows, topo, rule, harness)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    let mut all = Vec::with_capacity(classes.len());
    for p in parts {
        all.extend(p?);
    }
    Ok(all)
}

/// Loads the ten weight files written by [`cmd_train`].
pub fn load_weights(dir: &Path) -> Result<Vec<WeightState>> {
    (0..CLASSES)
        .map(|k| {
            let path = dir.join(weight_path(k));
            Ok(WeightState::from_text(&read(&path)?)?)
        })
        .collect()
}

/// Evaluates the trained circuits on the first `test_rows` test rows and
/// trains and evaluates the software baseline.
pub fn cmd_eval(cfg: &RunConfig, log: &Log) -> Result<Manifest> {
    let mut out = Outputs::new("eval", cfg)?;
    let states = load_weights(&cfg.out)?;
    for k in 0..CLASSES {
        out.input(&cfg.out.join(weight_path(k)))?;
    }
    for p in inputs_of(&cfg.test_data) {
        out.input(&p)?;
    }
    let test = load_samples(&cfg.test_data, cfg.test_rows)?;
    let harness = cfg.harness();
    let clf = Classifier::new(&cfg.topology())?;
    log.say(format!("evaluating {} test rows", test.len()));
    let rows = respond_parallel(&clf, &test, &states, &harness, cfg)?;
    let offsets = if cfg.baseline_correction {
        Some(baseline_offsets(&clf, &harness, cfg.response_unit)?)
    } else {
        None
    };
    let (matrix, metrics) = evaluate(&rows, offsets.as_deref(), cfg.response_unit.name())?;
    let mut csv = String::from("label");
    for k in 0..CLASSES {
        let _ = write!(csv, ",c{k}");
    }
    csv.push('\n');
    for r in &rows {
        let _ = write!(csv, "{}", r.label);
        for v in &r.responses {
            let _ = write!(csv, ",{v:?}");
        }
        csv.push('\n');
    }
    out.write("responses.csv", csv.as_bytes())?;
    out.write("result_matrix.csv", matrix.to_csv().as_bytes())?;
    out.write("metrics.csv", metrics.to_csv().as_bytes())?;
    out.write("matrix.svg", matrix_svg(&matrix).as_bytes())?;
    let eval_time = estimate_runtime(
        &WorkloadSpec {
            n_classes: CLASSES,
            rows_per_class: test.len(),
            ..cfg.workload()
        },
        &harness.timing,
    );
    out.write("eval_runtime.csv", eval_time.to_csv().as_bytes())?;
    log.say(format!("analog top-1 {:.3} top-3 {:.3}", metrics.top1, metrics.top3));

    for p in inputs_of(&cfg.train_data) {
        out.input(&p)?;
    }
    let train = load_samples(&cfg.train_data, cfg.baseline_train_rows)?;
    let btest = load_samples(&cfg.test_data, cfg.baseline_test_rows)?;
    let t0 = Instant::now();
    let model = baseline_train(&train, &cfg.baseline())?;
    let bm = baseline_eval(&model, &btest)?;
    let wall = t0.elapsed().as_secs_f64();
    out.write("baseline_metrics.csv", bm.to_csv().as_bytes())?;
    out.write_volatile("baseline_wall_seconds.txt", format!("{wall:?}\n").as_bytes())?;
    log.say(format!(
        "baseline top-1 {:.3} top-3 {:.3} on {} rows in {wall:.1} s",
        bm.top1,
        bm.top3,
        btest.len()
    ));
    out.finish()
}

fn respond_parallel(
    clf: &Classifier,
    test: &[Sample],
    states: &[WeightState],
    harness: &crate::learning::HarnessConfig,
    cfg: &RunConfig,
) -> Result<Vec<crate::learning::ResponseRow>> {
    let chunk = test.len().div_ceil(workers()).max(1);
    let parts: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = test
            .chunks(chunk)
            .enumerate()
            .map(|(n, part)| {
                s.spawn(move || {
                    // Offset the per-sample sensor seeds so the stream matches
                    // a single-threaded pass.
                    let mut h = harness.clone();
                    h.sensor.rng_seed = h.sensor.rng_seed.wrapping_add((n * chunk) as u64);
                    respond_all(clf, part, states, &h, cfg.response_unit).map(|r| r.0)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("inference thread panicked")).collect()
    });
    let mut all = Vec::with_capacity(test.len());
    for p in parts {
        all.extend(p?);
    }
    Ok(all)
}

/// Comparison table and timing chart from the artifacts of `train` and
/// `eval`. The baseline column is omitted when its metrics are absent.
pub fn cmd_report(cfg: &RunConfig, log: &Log) -> Result<Manifest> {
    let mut out = Outputs::new("report", cfg)?;
    let metrics_path = cfg.out.join("metrics.csv");
    let runtime_path = cfg.out.join("train_runtime.csv");
    let analog = Metrics::from_csv(&read(&metrics_path)?)?;
    let breakdown = RuntimeBreakdown::from_csv(&read(&runtime_path)?)?;
    out.input(&metrics_path)?;
    out.input(&runtime_path)?;
    let analog_sum = RunSummary {
        top1: analog.top1,
        top3: Some(analog.top3),
        seconds: breakdown.total(),
    };
    let bm_path = cfg.out.join("baseline_metrics.csv");
    let bt_path = cfg.out.join("baseline_wall_seconds.txt");
    let baseline = if bm_path.exists() && bt_path.exists() {
        out.input(&bm_path)?;
        let bm = Metrics::from_csv(&read(&bm_path)?)?;
        let secs: f64 = read(&bt_path)?.trim().parse().map_err(|_| {
            CommandError::Config(ConfigError::BadValue {
                key: "baseline_wall_seconds".into(),
                value: bt_path.display().to_string(),
                reason: "not a number".into(),
            })
        })?;
        Some(RunSummary {
            top1: bm.top1,
            top3: Some(bm.top3),
            seconds: secs,
        })
    } else {
        log.say("no baseline metrics found; reporting the analog column only");
        None
    };
    let report = compare_report(&analog_sum, baseline.as_ref(), Some(&breakdown), None);
    let chart = timing_svg(&breakdown, baseline.map(|b| b.seconds));
    if baseline.is_some() {
        out.write_volatile("report.md", report.as_bytes())?;
        out.write_volatile("timing.svg", chart.as_bytes())?;
    } else {
        out.write("report.md", report.as_bytes())?;
        out.write("timing.svg", chart.as_bytes())?;
    }
    out.write("timing.csv", breakdown.to_csv().as_bytes())?;
    if !log.quiet {
        print!("{report}");
    }
    out.finish()
}
