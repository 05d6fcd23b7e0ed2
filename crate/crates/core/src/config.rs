//! Run configuration for the `capnet` binary and the artifact manifest.
//!
//! The file format is flat: one `key = value` per line, `#` starts a
//! comment. Every key can also be given on the command line as
//! `--set key=value`. Later assignments win, so flags override the file,
//! which overrides the defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cells::{CellParams, NetworkTopology};
use crate::circuit::{DiodeModel, Integrator, TransientConfig};
use crate::learning::{BaselineConfig, FeedbackRule, HarnessConfig, ResponseUnit};
use crate::mcu::{ReadPoint, Schedule, SensorModel, TimingModel, WorkloadSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiodeChoice {
    Ideal,
    N4148,
}

impl DiodeChoice {
    pub fn model(self) -> DiodeModel {
        match self {
            DiodeChoice::Ideal => DiodeModel::ideal(),
            DiodeChoice::N4148 => DiodeModel::n4148(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            DiodeChoice::Ideal => "ideal",
            DiodeChoice::N4148 => "1n4148",
        }
    }
}

/// Every setting of a run. Field names are the config keys.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train_data: PathBuf,
    pub test_data: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub threshold: u8,
    pub train_rows: usize,
    pub test_rows: usize,
    pub epochs: usize,

    pub input_r1: f64,
    pub input_r2: f64,
    pub input_r3: f64,
    pub input_c1: f64,
    pub output_r1: f64,
    pub output_r2: f64,
    pub output_r3: f64,
    pub output_c1: f64,
    pub cell_diode: DiodeChoice,
    /// `None` wires the cells straight into the summing node.
    pub sum_diode: Option<DiodeChoice>,
    pub sense_resistor: f64,
    pub supply: f64,

    pub train_presentation: f64,
    pub train_dt: f64,
    pub infer_presentation: f64,
    pub infer_dt: f64,
    pub integrator: Integrator,
    pub read_point: ReadPoint,

    pub sensor_sensitivity: f64,
    pub sensor_zero_offset: f64,
    pub sensor_noise_sigma: f64,
    pub adc_bits: u32,
    pub adc_fullscale: f64,

    pub clock_hz: f64,
    pub fast_write_cost: f64,
    pub slow_write_cost: f64,
    pub fast_writes: bool,
    pub sd_row_latency: f64,
    pub adc_read_cost: f64,
    pub per_sample_settle: f64,
    pub workload_classes: usize,
    pub workload_rows_per_class: usize,

    pub feedback: bool,
    pub feedback_point_a: String,
    pub target_low: f64,
    pub target_high: f64,
    pub feedback_diode: DiodeChoice,

    pub response_unit: ResponseUnit,
    pub baseline_correction: bool,

    pub baseline_hidden: usize,
    pub baseline_lr: f64,
    pub baseline_epochs: usize,
    /// 0 means every row.
    pub baseline_train_rows: usize,
    pub baseline_test_rows: usize,

    pub trace_t_end: f64,
    pub trace_dt: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let input = CellParams::module1();
        let output = CellParams::module2();
        let harness = HarnessConfig::default();
        let timing = TimingModel::default();
        let sensor = SensorModel::default();
        let workload = WorkloadSpec::default();
        let rule = FeedbackRule::default();
        let base = BaselineConfig::default();
        Self {
            train_data: PathBuf::from("data/mnist_train.csv"),
            test_data: PathBuf::from("data/mnist_test.csv"),
            out: PathBuf::from("out"),
            seed: 0,
            threshold: harness.train_schedule.threshold,
            train_rows: workload.rows_per_class,
            test_rows: 100,
            epochs: harness.epochs,
            input_r1: input.r1,
            input_r2: input.r2,
            input_r3: input.r3,
            input_c1: input.c1,
            output_r1: output.r1,
            output_r2: output.r2,
            output_r3: output.r3,
            output_c1: output.c1,
            cell_diode: DiodeChoice::Ideal,
            sum_diode: Some(DiodeChoice::Ideal),
            sense_resistor: 10.0,
            supply: 5.0,
            train_presentation: harness.train_schedule.presentation,
            train_dt: harness.train_schedule.transient.dt,
            infer_presentation: harness.infer_schedule.presentation,
            infer_dt: harness.infer_schedule.transient.dt,
            integrator: harness.train_schedule.transient.integrator,
            read_point: harness.infer_schedule.read_point,
            sensor_sensitivity: sensor.sensitivity,
            sensor_zero_offset: sensor.zero_offset,
            sensor_noise_sigma: sensor.noise_sigma,
            adc_bits: sensor.adc_bits,
            adc_fullscale: sensor.adc_fullscale,
            clock_hz: timing.clock_hz,
            fast_write_cost: timing.fast_write_cost,
            slow_write_cost: timing.slow_write_cost,
            fast_writes: timing.fast_writes,
            sd_row_latency: timing.sd_row_latency,
            adc_read_cost: timing.adc_read_cost,
            per_sample_settle: timing.per_sample_settle,
            workload_classes: workload.n_classes,
            workload_rows_per_class: workload.rows_per_class,
            feedback: true,
            feedback_point_a: rule.point_a,
            target_low: rule.target_low_voltage,
            target_high: rule.target_high_voltage,
            feedback_diode: DiodeChoice::Ideal,
            response_unit: ResponseUnit::Amperes,
            baseline_correction: false,
            baseline_hidden: base.hidden,
            baseline_lr: base.learning_rate,
            baseline_epochs: base.epochs,
            baseline_train_rows: 0,
            baseline_test_rows: 0,
            trace_t_end: 50e-3,
            trace_dt: 1e-6,
        }
    }
}

fn bad(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| bad(key, value, "not a number"))
}

fn float(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = num(key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, value, "not finite"))
    }
}

fn flag(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        _ => Err(bad(key, value, "expected on or off")),
    }
}

fn diode(key: &str, value: &str) -> Result<DiodeChoice, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "ideal" => Ok(DiodeChoice::Ideal),
        "1n4148" => Ok(DiodeChoice::N4148),
        _ => Err(bad(key, value, "expected ideal or 1n4148")),
    }
}

fn on_off(b: bool) -> String {
    if b { "on" } else { "off" }.to_string()
}

impl RunConfig {
    /// Assigns one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "train_data" => self.train_data = PathBuf::from(v),
            "test_data" => self.test_data = PathBuf::from(v),
            "out" => self.out = PathBuf::from(v),
            "seed" => self.seed = num(key, v)?,
            "threshold" => self.threshold = num(key, v)?,
            "train_rows" => self.train_rows = num(key, v)?,
            "test_rows" => self.test_rows = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "input_r1" => self.input_r1 = float(key, v)?,
            "input_r2" => self.input_r2 = float(key, v)?,
            "input_r3" => self.input_r3 = float(key, v)?,
            "input_c1" => self.input_c1 = float(key, v)?,
            "output_r1" => self.output_r1 = float(key, v)?,
            "output_r2" => self.output_r2 = float(key, v)?,
            "output_r3" => self.output_r3 = float(key, v)?,
            "output_c1" => self.output_c1 = float(key, v)?,
            "cell_diode" => self.cell_diode = diode(key, v)?,
            "sum_diode" => {
                self.sum_diode = if v == "none" { None } else { Some(diode(key, v)?) };
            }
            "sense_resistor" => self.sense_resistor = float(key, v)?,
            "supply" => self.supply = float(key, v)?,
            "train_presentation" => self.train_presentation = float(key, v)?,
            "train_dt" => self.train_dt = float(key, v)?,
            "infer_presentation" => self.infer_presentation = float(key, v)?,
            "infer_dt" => self.infer_dt = float(key, v)?,
            "integrator" => {
                self.integrator = match v {
                    "trapezoidal" => Integrator::Trapezoidal,
                    "backward_euler" => Integrator::BackwardEuler,
                    _ => return Err(bad(key, v, "expected trapezoidal or backward_euler")),
                }
            }
            "read_point" => {
                self.read_point = match v {
                    "end" => ReadPoint::End,
                    "mean" => ReadPoint::Mean,
                    _ => return Err(bad(key, v, "expected end or mean")),
                }
            }
            "sensor_sensitivity" => self.sensor_sensitivity = float(key, v)?,
            "sensor_zero_offset" => self.sensor_zero_offset = float(key, v)?,
            "sensor_noise_sigma" => self.sensor_noise_sigma = float(key, v)?,
            "adc_bits" => self.adc_bits = num(key, v)?,
            "adc_fullscale" => self.adc_fullscale = float(key, v)?,
            "clock_hz" => self.clock_hz = float(key, v)?,
            "fast_write_cost" => self.fast_write_cost = float(key, v)?,
            "slow_write_cost" => self.slow_write_cost = float(key, v)?,
            "fast_writes" => self.fast_writes = flag(key, v)?,
            "sd_row_latency" => self.sd_row_latency = float(key, v)?,
            "adc_read_cost" => self.adc_read_cost = float(key, v)?,
            "per_sample_settle" => self.per_sample_settle = float(key, v)?,
            "workload_classes" => self.workload_classes = num(key, v)?,
            "workload_rows_per_class" => self.workload_rows_per_class = num(key, v)?,
            "feedback" => self.feedback = flag(key, v)?,
            "feedback_point_a" => self.feedback_point_a = v.to_string(),
            "target_low" => self.target_low = float(key, v)?,
            "target_high" => self.target_high = float(key, v)?,
            "feedback_diode" => self.feedback_diode = diode(key, v)?,
            "response_unit" => {
                self.response_unit = match v {
                    "amperes" => ResponseUnit::Amperes,
                    "adc_counts" => ResponseUnit::Counts,
                    _ => return Err(bad(key, v, "expected amperes or adc_counts")),
                }
            }
            "baseline_correction" => self.baseline_correction = flag(key, v)?,
            "baseline_hidden" => self.baseline_hidden = num(key, v)?,
            "baseline_lr" => self.baseline_lr = float(key, v)?,
            "baseline_epochs" => self.baseline_epochs = num(key, v)?,
            "baseline_train_rows" => self.baseline_train_rows = num(key, v)?,
            "baseline_test_rows" => self.baseline_test_rows = num(key, v)?,
            "trace_t_end" => self.trace_t_end = float(key, v)?,
            "trace_dt" => self.trace_dt = float(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// `(key, value)` for every setting, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let f = |v: f64| format!("{v:?}");
        vec![
            ("train_data", self.train_data.display().to_string()),
            ("test_data", self.test_data.display().to_string()),
            ("out", self.out.display().to_string()),
            ("seed", self.seed.to_string()),
            ("threshold", self.threshold.to_string()),
            ("train_rows", self.train_rows.to_string()),
            ("test_rows", self.test_rows.to_string()),
            ("epochs", self.epochs.to_string()),
            ("input_r1", f(self.input_r1)),
            ("input_r2", f(self.input_r2)),
            ("input_r3", f(self.input_r3)),
            ("input_c1", f(self.input_c1)),
            ("output_r1", f(self.output_r1)),
            ("output_r2", f(self.output_r2)),
            ("output_r3", f(self.output_r3)),
            ("output_c1", f(self.output_c1)),
            ("cell_diode", self.cell_diode.name().to_string()),
            ("sum_diode", self.sum_diode.map_or("none", DiodeChoice::name).to_string()),
            ("sense_resistor", f(self.sense_resistor)),
            ("supply", f(self.supply)),
            ("train_presentation", f(self.train_presentation)),
            ("train_dt", f(self.train_dt)),
            ("infer_presentation", f(self.infer_presentation)),
            ("infer_dt", f(self.infer_dt)),
            (
                "integrator",
                match self.integrator {
                    Integrator::Trapezoidal => "trapezoidal",
                    Integrator::BackwardEuler => "backward_euler",
                }
                .to_string(),
            ),
            (
                "read_point",
                match self.read_point {
                    ReadPoint::End => "end",
                    ReadPoint::Mean => "mean",
                }
                .to_string(),
            ),
            ("sensor_sensitivity", f(self.sensor_sensitivity)),
            ("sensor_zero_offset", f(self.sensor_zero_offset)),
            ("sensor_noise_sigma", f(self.sensor_noise_sigma)),
            ("adc_bits", self.adc_bits.to_string()),
            ("adc_fullscale", f(self.adc_fullscale)),
            ("clock_hz", f(self.clock_hz)),
            ("fast_write_cost", f(self.fast_write_cost)),
            ("slow_write_cost", f(self.slow_write_cost)),
            ("fast_writes", on_off(self.fast_writes)),
            ("sd_row_latency", f(self.sd_row_latency)),
            ("adc_read_cost", f(self.adc_read_cost)),
            ("per_sample_settle", f(self.per_sample_settle)),
            ("workload_classes", self.workload_classes.to_string()),
            ("workload_rows_per_class", self.workload_rows_per_class.to_string()),
            ("feedback", on_off(self.feedback)),
            ("feedback_point_a", self.feedback_point_a.clone()),
            ("target_low", f(self.target_low)),
            ("target_high", f(self.target_high)),
            ("feedback_diode", self.feedback_diode.name().to_string()),
            ("response_unit", self.response_unit.name().to_string()),
            ("baseline_correction", on_off(self.baseline_correction)),
            ("baseline_hidden", self.baseline_hidden.to_string()),
            ("baseline_lr", f(self.baseline_lr)),
            ("baseline_epochs", self.baseline_epochs.to_string()),
            ("baseline_train_rows", self.baseline_train_rows.to_string()),
            ("baseline_test_rows", self.baseline_test_rows.to_string()),
            ("trace_t_end", f(self.trace_t_end)),
            ("trace_dt", f(self.trace_dt)),
        ]
    }

    /// Canonical text: every key, one per line, in [`RunConfig::entries`]
    /// order. Parsing it back yields the same config.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Applies the assignments in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: k + 1 })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Defaults, then `file` if given, then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        if let Some(path) = file {
            c.apply_text(&std::fs::read_to_string(path)?)?;
        }
        for (k, v) in overrides {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// SHA-256 of [`RunConfig::render`], hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }

    /// Checks every nested invariant.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.topology().validate().map_err(|e| inv(&e))?;
        let h = self.harness();
        for s in [&h.train_schedule, &h.infer_schedule] {
            s.transient.validate().map_err(|e| inv(&e))?;
            if !(s.presentation.is_finite() && s.presentation >= s.transient.dt) {
                return Err(ConfigError::Invalid("presentation must be at least one step".into()));
            }
        }
        h.sensor.validate().map_err(|e| inv(&e))?;
        h.timing.validate().map_err(|e| inv(&e))?;
        if let Some(rule) = self.feedback_rule() {
            rule.validate().map_err(|e| inv(&e))?;
        }
        if !(self.baseline_lr > 0.0) || self.baseline_hidden == 0 {
            return Err(ConfigError::Invalid("baseline_lr and baseline_hidden must be positive".into()));
        }
        if !(self.trace_dt > 0.0 && self.trace_t_end >= self.trace_dt) {
            return Err(ConfigError::Invalid("trace_t_end must be at least trace_dt > 0".into()));
        }
        Ok(())
    }

    pub fn input_cell(&self) -> CellParams {
        CellParams {
            r1: self.input_r1,
            r2: self.input_r2,
            r3: self.input_r3,
            c1: self.input_c1,
            diode: Some(self.cell_diode.model()),
        }
    }

    pub fn output_cell(&self) -> CellParams {
        CellParams {
            r1: self.output_r1,
            r2: self.output_r2,
            r3: self.output_r3,
            c1: self.output_c1,
            diode: Some(self.cell_diode.model()),
        }
    }

    pub fn topology(&self) -> NetworkTopology {
        let mut t = NetworkTopology::uniform(crate::data::SAMPLE_LEN, self.input_cell(), self.output_cell());
        t.summing_diode = self.sum_diode.map(DiodeChoice::model);
        t.sense_resistor = self.sense_resistor;
        t.supply = self.supply;
        t
    }

    fn transient(&self, dt: f64) -> TransientConfig {
        TransientConfig {
            dt,
            integrator: self.integrator,
            rng_seed: self.seed,
            ..TransientConfig::default()
        }
    }

    pub fn sensor(&self) -> SensorModel {
        SensorModel {
            sensitivity: self.sensor_sensitivity,
            zero_offset: self.sensor_zero_offset,
            noise_sigma: self.sensor_noise_sigma,
            adc_bits: self.adc_bits,
            adc_fullscale: self.adc_fullscale,
            rng_seed: self.seed,
        }
    }

    pub fn timing(&self) -> TimingModel {
        TimingModel {
            clock_hz: self.clock_hz,
            fast_write_cost: self.fast_write_cost,
            slow_write_cost: self.slow_write_cost,
            fast_writes: self.fast_writes,
            sd_row_latency: self.sd_row_latency,
            adc_read_cost: self.adc_read_cost,
            per_sample_settle: self.per_sample_settle,
        }
    }

    pub fn harness(&self) -> HarnessConfig {
        HarnessConfig {
            train_schedule: Schedule {
                presentation: self.train_presentation,
                threshold: self.threshold,
                transient: self.transient(self.train_dt),
                read_point: ReadPoint::End,
            },
            infer_schedule: Schedule {
                presentation: self.infer_presentation,
                threshold: self.threshold,
                transient: self.transient(self.infer_dt),
                read_point: self.read_point,
            },
            sensor: self.sensor(),
            timing: self.timing(),
            epochs: self.epochs,
        }
    }

    pub fn workload(&self) -> WorkloadSpec {
        WorkloadSpec {
            n_classes: self.workload_classes,
            rows_per_class: self.workload_rows_per_class,
            ..WorkloadSpec::default()
        }
    }

    pub fn feedback_rule(&self) -> Option<FeedbackRule> {
        self.feedback.then(|| FeedbackRule {
            point_a: self.feedback_point_a.clone(),
            target_low_voltage: self.target_low,
            target_high_voltage: self.target_high,
            feedback_diode: self.feedback_diode.model(),
            ..FeedbackRule::default()
        })
    }

    pub fn baseline(&self) -> BaselineConfig {
        BaselineConfig {
            hidden: self.baseline_hidden,
            learning_rate: self.baseline_lr,
            epochs: self.baseline_epochs,
            rng_seed: self.seed,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// What a command read and wrote. Paths of artifacts are relative to the
/// output directory. Volatile artifacts depend on the wall clock and are
/// excluded from reproducibility comparisons.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<(String, u64)>,
    pub inputs: Vec<(String, String)>,
    pub artifacts: Vec<(String, String)>,
    pub volatile: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config_hash: cfg.hash(),
            seeds: vec![
                ("sensor".into(), cfg.seed),
                ("transient".into(), cfg.seed),
                ("baseline".into(), cfg.seed),
            ],
            ..Self::default()
        }
    }

    /// Records an input file by content hash.
    pub fn input(&mut self, path: &Path) -> Result<(), std::io::Error> {
        let bytes = std::fs::read(path)?;
        self.inputs.push((path.display().to_string(), sha256_hex(&bytes)));
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = format!("command = {}\nconfig_sha256 = {}\n", self.command, self.config_hash);
        for (k, v) in &self.seeds {
            let _ = writeln!(s, "seed {k} = {v}");
        }
        for (p, h) in &self.inputs {
            let _ = writeln!(s, "input {p} = {h}");
        }
        for (p, h) in &self.artifacts {
            let _ = writeln!(s, "artifact {p} = {h}");
        }
        for p in &self.volatile {
            let _ = writeln!(s, "volatile {p}");
        }
        s
    }
}
