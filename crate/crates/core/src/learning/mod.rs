//! One-vs-all training with target feedback, inference and evaluation.
//!
//! Each class has its own classifier circuit. While training, a feedback
//! diode runs from point A of the network to point B, a rail held at the
//! target level: high for rows of the circuit's class, low otherwise. When
//! the network sits above a low target the diode conducts and pulls point A
//! down, which slows the charging of every active weight capacitor. The
//! capacitor voltages left at the end are the weights.

mod baseline;
mod metrics;

use std::fmt::Write as _;

use thiserror::Error;

pub use baseline::{baseline_eval, baseline_train, BaselineConfig, BaselineModel};
pub use metrics::{argmax, evaluate, rank_of, Metrics, ResponseRow, ResultMatrix, CLASSES, TIE_RULE};

use crate::cells::{capacitor_name, compose_classifier, input_cell, CellError, NetworkTopology, OUTPUT_CELL, SUM_NODE};
use crate::circuit::{assemble, CircuitError, DiodeModel, MnaSystem, Netlist, TransientConfig, Waveform, GROUND};
use crate::data::Sample;
use crate::mcu::{estimate_runtime, Harness, WorkloadSpec, McuError, Measurement, ReadPoint, Schedule, SensorModel, TimingModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearningError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("class id {0} out of range")]
    BadClass(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("weight file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Mcu(#[from] McuError),
}

pub const TARGET_SOURCE: &str = "VT";
pub const FEEDBACK_DIODE: &str = "M4";

/// Target-feedback stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRule {
    pub point_a: String,
    pub point_b: String,
    pub target_low_voltage: f64,
    pub target_high_voltage: f64,
    pub feedback_diode: DiodeModel,
}

impl Default for FeedbackRule {
    fn default() -> Self {
        Self {
            point_a: SUM_NODE.to_string(),
            point_b: "target".to_string(),
            target_low_voltage: 0.0,
            target_high_voltage: 5.0,
            feedback_diode: DiodeModel::ideal(),
        }
    }
}

impl FeedbackRule {
    pub fn validate(&self) -> Result<(), LearningError> {
        if !(self.target_low_voltage < self.target_high_voltage) {
            return Err(LearningError::InvalidConfig(
                "target_low_voltage must be below target_high_voltage".into(),
            ));
        }
        if self.point_a == self.point_b || self.point_b == GROUND {
            return Err(LearningError::InvalidConfig("point_b must be a distinct new node".into()));
        }
        Ok(())
    }

    /// Adds diode `M4` from A to B and the target rail `VT` on B, initially
    /// high so the stage starts blocked.
    pub fn attach(&self, net: &mut Netlist) -> Result<(), LearningError> {
        self.validate()?;
        if !net.nodes().contains(&self.point_a) {
            return Err(LearningError::InvalidConfig(format!("no node `{}`", self.point_a)));
        }
        net.diode(FEEDBACK_DIODE, &self.point_a, &self.point_b, self.feedback_diode)
            .source(TARGET_SOURCE, &self.point_b, GROUND, Waveform::Dc(self.target_high_voltage));
        Ok(())
    }

    pub fn target_for(&self, label: u8, class_id: u8) -> f64 {
        if label == class_id {
            self.target_high_voltage
        } else {
            self.target_low_voltage
        }
    }
}

/// Capacitor voltages of one trained circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    pub class_id: u8,
    pub supply: f64,
    pub inputs: Vec<f64>,
    pub output: f64,
}

impl WeightState {
    pub fn zeros(class_id: u8, n_inputs: usize, supply: f64) -> Self {
        Self {
            class_id,
            supply,
            inputs: vec![0.0; n_inputs],
            output: 0.0,
        }
    }

    pub fn voltages(&self) -> impl Iterator<Item = f64> + '_ {
        self.inputs.iter().copied().chain(std::iter::once(self.output))
    }

    /// Within 1% of the supply.
    pub fn saturated_flags(&self) -> Vec<bool> {
        self.voltages().map(|v| v >= 0.99 * self.supply).collect()
    }

    pub fn input_saturation(&self) -> f64 {
        let n = self.inputs.iter().filter(|v| **v >= 0.99 * self.supply).count();
        n as f64 / self.inputs.len().max(1) as f64
    }

    /// `class=<k> supply=<v> format=1`, then `index,voltage` per capacitor,
    /// inputs first and the output cell last.
    pub fn to_text(&self) -> String {
        let mut s = format!("class={} supply={:?} format=1\n", self.class_id, self.supply);
        for (k, v) in self.voltages().enumerate() {
            let _ = writeln!(s, "{k},{v:?}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, LearningError> {
        let err = |line: usize, msg: &str| LearningError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err(1, "empty file"))?;
        let (mut class_id, mut supply, mut format) = (None, None, None);
        for kv in header.split_whitespace() {
            match kv.split_once('=') {
                Some(("class", v)) => class_id = v.parse::<u8>().ok().filter(|c| *c < 10),
                Some(("supply", v)) => supply = v.parse::<f64>().ok(),
                Some(("format", v)) => format = Some(v.to_string()),
                _ => return Err(err(1, &format!("unexpected `{kv}`"))),
            }
        }
        if format.as_deref() != Some("1") {
            return Err(err(1, "unsupported format"));
        }
        let class_id = class_id.ok_or_else(|| err(1, "missing or bad class"))?;
        let supply = supply.ok_or_else(|| err(1, "missing or bad supply"))?;
        let mut volts = Vec::new();
        for (k, line) in lines.enumerate() {
            let ln = k + 2;
            if line.trim().is_empty() {
                continue;
            }
            let (i, v) = line.split_once(',').ok_or_else(|| err(ln, "expected index,voltage"))?;
            if i.parse::<usize>().ok() != Some(volts.len()) {
                return Err(err(ln, "indices must count up from 0"));
            }
            let v: f64 = v.parse().map_err(|_| err(ln, "bad voltage"))?;
            if !v.is_finite() {
                return Err(err(ln, "non-finite voltage"));
            }
            volts.push(v);
        }
        let output = volts.pop().ok_or_else(|| err(2, "no voltages"))?;
        Ok(Self {
            class_id,
            supply,
            inputs: volts,
            output,
        })
    }
}

/// Capacitor indices of the input cells and the output cell.
fn capacitor_slots(sys: &MnaSystem, n_inputs: usize) -> Result<(Vec<usize>, usize), LearningError> {
    let find = |name: String| {
        sys.capacitor_index(&name)
            .ok_or_else(|| LearningError::ShapeMismatch(format!("no capacitor `{name}`")))
    };
    let inputs = (0..n_inputs)
        .map(|k| find(capacitor_name(&input_cell(k))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((inputs, find(capacitor_name(OUTPUT_CELL))?))
}

fn read_state(h: &Harness<'_>, slots: &(Vec<usize>, usize), class_id: u8, supply: f64) -> WeightState {
    let v = h.capacitor_voltages();
    WeightState {
        class_id,
        supply,
        inputs: slots.0.iter().map(|&i| v[i]).collect(),
        output: v[slots.1],
    }
}

fn load_state(h: &mut Harness<'_>, slots: &(Vec<usize>, usize), state: &WeightState) -> Result<(), LearningError> {
    if state.inputs.len() != slots.0.len() {
        return Err(LearningError::ShapeMismatch(format!(
            "{} input weights for {} inputs",
            state.inputs.len(),
            slots.0.len()
        )));
    }
    let mut v = h.capacitor_voltages().to_vec();
    for (&i, w) in slots.0.iter().zip(&state.inputs) {
        v[i] = *w;
    }
    v[slots.1] = state.output;
    h.set_capacitor_voltages(&v)?;
    Ok(())
}

/// Harness settings shared by training and inference.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub train_schedule: Schedule,
    pub infer_schedule: Schedule,
    pub sensor: SensorModel,
    pub timing: TimingModel,
    /// Passes over the training rows.
    pub epochs: usize,
}

/// Binarization threshold used for learning runs. At 128 about 40% of the
/// 5×5 test digits drive no pin at all.
pub const LEARNING_THRESHOLD: u8 = 64;
/// Short training pulses keep the input capacitors away from the supply
/// over 565 rows.
pub const TRAIN_PRESENTATION: f64 = 100e-6;
/// Inference runs until the sum node settles, read at the end.
pub const INFER_PRESENTATION: f64 = 10e-3;
pub const INFER_DT: f64 = 10e-6;

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            train_schedule: Schedule {
                presentation: TRAIN_PRESENTATION,
                threshold: LEARNING_THRESHOLD,
                ..Schedule::default()
            },
            infer_schedule: Schedule {
                presentation: INFER_PRESENTATION,
                threshold: LEARNING_THRESHOLD,
                transient: TransientConfig {
                    dt: INFER_DT,
                    ..TransientConfig::default()
                },
                read_point: ReadPoint::End,
            },
            sensor: SensorModel::default(),
            timing: TimingModel::default(),
            epochs: 1,
        }
    }
}

/// More than 80% of the input capacitors within 1% of the supply before
/// the last row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationWarning {
    pub row: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: WeightState,
    pub measurements: Vec<Measurement>,
    /// Accounted microcontroller time, seconds.
    pub elapsed: f64,
    pub warning: Option<SaturationWarning>,
}

/// Classifier netlist with the feedback stage attached.
pub fn training_netlist(topology: &NetworkTopology, rule: Option<&FeedbackRule>) -> Result<Netlist, LearningError> {
    let mut net = compose_classifier(topology)?;
    if let Some(rule) = rule {
        rule.attach(&mut net)?;
    }
    Ok(net)
}

/// Presents `samples` in order (for `cfg.epochs` passes) to one circuit,
/// starting from uncharged capacitors, with the target rail set per row.
/// `rule: None` runs the same rows with the feedback stage disconnected.
pub fn train_class_circuit(
    class_id: u8,
    samples: &[Sample],
    topology: &NetworkTopology,
    rule: Option<&FeedbackRule>,
    cfg: &HarnessConfig,
) -> Result<TrainOutcome, LearningError> {
    if class_id as usize >= CLASSES {
        return Err(LearningError::BadClass(class_id as usize));
    }
    let net = training_netlist(topology, rule)?;
    let sys = assemble(&net)?;
    let slots = capacitor_slots(&sys, topology.n_inputs)?;
    let mut sensor = cfg.sensor.clone();
    sensor.rng_seed = sensor.rng_seed.wrapping_add(class_id as u64);
    let mut h = Harness::new(&sys, sensor, cfg.timing.clone(), cfg.train_schedule.clone())?;
    let mut measurements = Vec::with_capacity(samples.len() * cfg.epochs);
    let mut warning = None;
    let total = samples.len() * cfg.epochs;
    for (n, s) in (0..cfg.epochs).flat_map(|_| samples.iter()).enumerate() {
        if let Some(rule) = rule {
            h.set_source(TARGET_SOURCE, rule.target_for(s.label, class_id))?;
        }
        measurements.push(h.present(s)?);
        if warning.is_none() && n + 1 < total {
            let st = read_state(&h, &slots, class_id, topology.supply);
            let f = st.input_saturation();
            if f > 0.8 {
                warning = Some(SaturationWarning { row: n, fraction: f });
            }
        }
    }
    Ok(TrainOutcome {
        state: read_state(&h, &slots, class_id, topology.supply),
        measurements,
        elapsed: h.elapsed(),
        warning,
    })
}

/// Reading of one circuit for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub amperes: f64,
    pub counts: u32,
}

/// The ten class circuits sharing one assembled topology (no feedback
/// stage). Each response loads the circuit's weights as initial capacitor
/// voltages, so inference never changes the stored weights.
pub struct Classifier {
    topology: NetworkTopology,
    sys: MnaSystem,
}

impl Classifier {
    pub fn new(topology: &NetworkTopology) -> Result<Self, LearningError> {
        let sys = assemble(&compose_classifier(topology)?)?;
        Ok(Self {
            topology: topology.clone(),
            sys,
        })
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    /// Readings of every circuit in `states` order. `seed` offsets the
    /// sensor noise stream.
    pub fn infer(
        &self,
        sample: &Sample,
        states: &[WeightState],
        cfg: &HarnessConfig,
        seed: u64,
    ) -> Result<Vec<Reading>, LearningError> {
        let slots = capacitor_slots(&self.sys, self.topology.n_inputs)?;
        let mut sensor = cfg.sensor.clone();
        sensor.rng_seed = sensor.rng_seed.wrapping_add(seed);
        let mut h = Harness::new(&self.sys, sensor, cfg.timing.clone(), cfg.infer_schedule.clone())?;
        let mut out = Vec::with_capacity(states.len());
        for state in states {
            load_state(&mut h, &slots, state)?;
            let m = h.present(sample)?;
            out.push(Reading {
                amperes: m.amperes,
                counts: m.counts,
            });
        }
        Ok(out)
    }
}

/// Convenience wrapper building a [`Classifier`] for one sample.
pub fn infer(
    sample: &Sample,
    states: &[WeightState],
    topology: &NetworkTopology,
    cfg: &HarnessConfig,
) -> Result<Vec<Reading>, LearningError> {
    Classifier::new(topology)?.infer(sample, states, cfg, 0)
}

/// Unit in which responses are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResponseUnit {
    #[default]
    Amperes,
    Counts,
}

impl ResponseUnit {
    pub fn name(self) -> &'static str {
        match self {
            ResponseUnit::Amperes => "amperes",
            ResponseUnit::Counts => "adc_counts",
        }
    }

    pub fn pick(self, r: &Reading) -> f64 {
        match self {
            ResponseUnit::Amperes => r.amperes,
            ResponseUnit::Counts => r.counts as f64,
        }
    }
}

/// Each untrained circuit's response to an all-zero sample, used as
/// per-circuit offsets.
pub fn baseline_offsets(
    classifier: &Classifier,
    cfg: &HarnessConfig,
    unit: ResponseUnit,
) -> Result<Vec<f64>, LearningError> {
    let t = classifier.topology();
    let untrained: Vec<WeightState> = (0..CLASSES as u8)
        .map(|c| WeightState::zeros(c, t.n_inputs, t.supply))
        .collect();
    let zero = Sample {
        label: 0,
        values: [0; crate::data::SAMPLE_LEN],
    };
    Ok(classifier
        .infer(&zero, &untrained, cfg, 0)?
        .iter()
        .map(|r| unit.pick(r))
        .collect())
}

/// Trains one circuit per class id in `classes`, each on the same rows.
pub fn train_all(
    classes: &[u8],
    samples: &[Sample],
    topology: &NetworkTopology,
    rule: Option<&FeedbackRule>,
    cfg: &HarnessConfig,
) -> Result<Vec<TrainOutcome>, LearningError> {
    classes
        .iter()
        .map(|&c| train_class_circuit(c, samples, topology, rule, cfg))
        .collect()
}

/// Responses of every circuit to every test sample, plus the accounted
/// microcontroller time of the pass.
pub fn respond_all(
    classifier: &Classifier,
    test: &[Sample],
    states: &[WeightState],
    cfg: &HarnessConfig,
    unit: ResponseUnit,
) -> Result<(Vec<ResponseRow>, f64), LearningError> {
    let mut rows = Vec::with_capacity(test.len());
    for (k, s) in test.iter().enumerate() {
        let r = classifier.infer(s, states, cfg, k as u64)?;
        rows.push(ResponseRow {
            label: s.label,
            responses: r.iter().map(|x| unit.pick(x)).collect(),
        });
    }
    let workload = WorkloadSpec {
        n_classes: states.len(),
        rows_per_class: test.len(),
        writes_per_row: classifier.topology().n_inputs,
        reads_per_row: 1,
    };
    Ok((rows, estimate_runtime(&workload, &cfg.timing).total()))
}

/// Two-class desk-scale set: class 0 lights the upper twelve pins, class 1
/// the lower thirteen, each row with `dropout` random pins of its pattern
/// switched off. Rows alternate labels.
pub fn toy_set(n_per_class: usize, dropout: usize, seed: u64) -> Vec<Sample> {
    use rand::seq::index::sample as pick;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let split = 12;
    let mut out = Vec::with_capacity(2 * n_per_class);
    for _ in 0..n_per_class {
        for label in 0..2u8 {
            let pins: Vec<usize> = if label == 0 {
                (0..split).collect()
            } else {
                (split..crate::data::SAMPLE_LEN).collect()
            };
            let mut values = [0u8; crate::data::SAMPLE_LEN];
            for &p in &pins {
                values[p] = 255;
            }
            for k in pick(&mut rng, pins.len(), dropout.min(pins.len())) {
                values[pins[k]] = 0;
            }
            out.push(Sample { label, values });
        }
    }
    out
}
