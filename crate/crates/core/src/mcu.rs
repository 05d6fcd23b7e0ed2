//! Microcontroller side of the loop: binary pin encoding, the Hall-effect
//! current sensor with its 10-bit ADC, and runtime accounting.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::cells::{pin_source, SENSE_PROBE};
use crate::circuit::{CircuitError, MnaSystem, Simulator, TransientConfig, Waveform};
use crate::data::{Sample, SAMPLE_LEN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McuError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Logic-high level of a digital pin, volts.
pub const HIGH_VOLTS: f64 = 5.0;

/// Levels of the 25 input pins for one presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct PinWaveform {
    pub high: Vec<bool>,
    pub duration: f64,
}

impl PinWaveform {
    pub fn pin_count(&self) -> usize {
        self.high.len()
    }

    pub fn voltage(&self, pin: usize) -> f64 {
        if self.high[pin] {
            HIGH_VOLTS
        } else {
            0.0
        }
    }

    pub fn active(&self) -> usize {
        self.high.iter().filter(|h| **h).count()
    }
}

/// Pin `i` is high iff `values[i] > threshold`.
pub fn encode_sample(sample: &Sample, threshold: u8, duration: f64) -> Result<PinWaveform, McuError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(McuError::InvalidConfig("presentation duration must be positive".into()));
    }
    Ok(PinWaveform {
        high: sample.values.iter().map(|v| *v > threshold).collect(),
        duration,
    })
}

/// Current sensor plus ADC transfer function.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    /// Volts per ampere.
    pub sensitivity: f64,
    /// Output at zero current, volts.
    pub zero_offset: f64,
    /// Standard deviation of additive output noise, volts.
    pub noise_sigma: f64,
    pub adc_bits: u32,
    pub adc_fullscale: f64,
    pub rng_seed: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            sensitivity: 0.185,
            zero_offset: 2.5,
            noise_sigma: 0.0,
            adc_bits: 10,
            adc_fullscale: 5.0,
            rng_seed: 0,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<(), McuError> {
        let bad = |m: &str| Err(McuError::InvalidConfig(m.to_string()));
        if !(self.sensitivity.is_finite() && self.sensitivity > 0.0) {
            return bad("sensitivity must be positive");
        }
        if !(self.adc_fullscale.is_finite() && self.adc_fullscale > 0.0) {
            return bad("adc_fullscale must be positive");
        }
        if !(0.0..=self.adc_fullscale).contains(&self.zero_offset) {
            return bad("zero_offset must lie within the ADC range");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be nonnegative");
        }
        if !(1..=24).contains(&self.adc_bits) {
            return bad("adc_bits must be between 1 and 24");
        }
        Ok(())
    }

    pub fn max_count(&self) -> u32 {
        (1u32 << self.adc_bits) - 1
    }

    /// Amperes per count.
    pub fn lsb_amperes(&self) -> f64 {
        self.adc_fullscale / self.max_count() as f64 / self.sensitivity
    }

    /// Counts for a given current and noise sample (volts).
    pub fn counts(&self, current: f64, noise: f64) -> u32 {
        let max = self.max_count() as f64;
        let v = self.zero_offset + self.sensitivity * current + noise;
        (v / self.adc_fullscale * max).round().clamp(0.0, max) as u32
    }

    /// Current at the centre of a count's quantization bin.
    pub fn decode(&self, counts: u32) -> f64 {
        let v = counts as f64 / self.max_count() as f64 * self.adc_fullscale;
        (v - self.zero_offset) / self.sensitivity
    }
}

/// Noise-free reading.
pub fn sense_current(current: f64, model: &SensorModel) -> u32 {
    model.counts(current, 0.0)
}

/// A sensor with its own seeded noise stream.
#[derive(Debug, Clone)]
pub struct Sensor {
    pub model: SensorModel,
    rng: ChaCha8Rng,
}

impl Sensor {
    pub fn new(model: SensorModel) -> Result<Self, McuError> {
        model.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(model.rng_seed);
        Ok(Self { model, rng })
    }

    pub fn read(&mut self, current: f64) -> u32 {
        let noise = if self.model.noise_sigma > 0.0 {
            Normal::new(0.0, self.model.noise_sigma)
                .expect("validated sigma")
                .sample(&mut self.rng)
        } else {
            0.0
        };
        self.model.counts(current, noise)
    }
}

/// Per-operation costs of the microcontroller loop, seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingModel {
    pub clock_hz: f64,
    pub fast_write_cost: f64,
    pub slow_write_cost: f64,
    /// Use the fast pin-write path.
    pub fast_writes: bool,
    pub sd_row_latency: f64,
    pub adc_read_cost: f64,
    pub per_sample_settle: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        Self {
            clock_hz: 16e6,
            fast_write_cost: 128e-9,
            slow_write_cost: 5.8e-6,
            fast_writes: true,
            sd_row_latency: 0.4,
            adc_read_cost: 112e-6,
            per_sample_settle: 0.0,
        }
    }
}

impl TimingModel {
    pub fn validate(&self) -> Result<(), McuError> {
        let all = [
            self.clock_hz,
            self.fast_write_cost,
            self.slow_write_cost,
            self.sd_row_latency,
            self.adc_read_cost,
            self.per_sample_settle,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(McuError::InvalidConfig("timing costs must be nonnegative".into()));
        }
        if self.fast_write_cost >= self.slow_write_cost {
            return Err(McuError::InvalidConfig(
                "fast_write_cost must be below slow_write_cost".into(),
            ));
        }
        Ok(())
    }

    pub fn write_cost(&self) -> f64 {
        if self.fast_writes {
            self.fast_write_cost
        } else {
            self.slow_write_cost
        }
    }

    /// Clock cycles spent in `seconds`.
    pub fn cycles(&self, seconds: f64) -> f64 {
        seconds * self.clock_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub n_classes: usize,
    pub rows_per_class: usize,
    pub writes_per_row: usize,
    pub reads_per_row: usize,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            n_classes: 10,
            rows_per_class: 565,
            writes_per_row: SAMPLE_LEN,
            reads_per_row: 1,
        }
    }
}

impl WorkloadSpec {
    pub fn rows(&self) -> usize {
        self.n_classes * self.rows_per_class
    }
}

/// Runtime split by component, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RuntimeBreakdown {
    pub sd_latency: f64,
    pub pin_writes: f64,
    pub adc_reads: f64,
    pub settle: f64,
}

impl RuntimeBreakdown {
    pub fn total(&self) -> f64 {
        self.sd_latency + self.pin_writes + self.adc_reads + self.settle
    }

    pub fn components(&self) -> [(&'static str, f64); 4] {
        [
            ("sd_latency", self.sd_latency),
            ("pin_writes", self.pin_writes),
            ("adc_reads", self.adc_reads),
            ("settle", self.settle),
        ]
    }

    pub fn sd_share(&self) -> f64 {
        let t = self.total();
        if t > 0.0 {
            self.sd_latency / t
        } else {
            0.0
        }
    }

    /// `component,seconds` rows plus a `total` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("component,seconds\n");
        for (name, v) in self.components() {
            let _ = writeln!(s, "{name},{v:?}");
        }
        let _ = writeln!(s, "total,{:?}", self.total());
        s
    }

    /// Inverse of [`RuntimeBreakdown::to_csv`]; the `total` row is ignored.
    pub fn from_csv(text: &str) -> Result<Self, McuError> {
        let mut b = Self::default();
        for line in text.lines().skip(1) {
            let (name, v) = line
                .split_once(',')
                .ok_or_else(|| McuError::InvalidConfig(format!("bad runtime row `{line}`")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| McuError::InvalidConfig(format!("bad seconds in `{line}`")))?;
            match name {
                "sd_latency" => b.sd_latency = v,
                "pin_writes" => b.pin_writes = v,
                "adc_reads" => b.adc_reads = v,
                "settle" => b.settle = v,
                "total" => {}
                _ => return Err(McuError::InvalidConfig(format!("unknown component `{name}`"))),
            }
        }
        Ok(b)
    }
}

impl std::ops::Add for RuntimeBreakdown {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            sd_latency: self.sd_latency + o.sd_latency,
            pin_writes: self.pin_writes + o.pin_writes,
            adc_reads: self.adc_reads + o.adc_reads,
            settle: self.settle + o.settle,
        }
    }
}

fn row_cost(workload: &WorkloadSpec, timing: &TimingModel) -> RuntimeBreakdown {
    RuntimeBreakdown {
        sd_latency: timing.sd_row_latency,
        pin_writes: workload.writes_per_row as f64 * timing.write_cost(),
        adc_reads: workload.reads_per_row as f64 * timing.adc_read_cost,
        settle: timing.per_sample_settle,
    }
}

pub fn estimate_runtime(workload: &WorkloadSpec, timing: &TimingModel) -> RuntimeBreakdown {
    let per_row = row_cost(workload, timing);
    let n = workload.rows() as f64;
    RuntimeBreakdown {
        sd_latency: n * per_row.sd_latency,
        pin_writes: n * per_row.pin_writes,
        adc_reads: n * per_row.adc_reads,
        settle: n * per_row.settle,
    }
}

/// `h min m s` with the seconds rounded to the nearest integer.
pub fn format_duration(seconds: f64) -> String {
    let s = seconds.round() as u64;
    match (s / 3600, (s % 3600) / 60, s % 60) {
        (0, 0, sec) => format!("{sec} s"),
        (0, m, sec) => format!("{m} min {sec} s"),
        (h, m, sec) => format!("{h} h {m} min {sec} s"),
    }
}

/// What the harness reports for each presentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadPoint {
    /// Probe current at the end of the presentation.
    #[default]
    End,
    /// Mean probe current over the presentation.
    Mean,
}

/// How each row is presented to the circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub presentation: f64,
    pub threshold: u8,
    pub transient: TransientConfig,
    pub read_point: ReadPoint,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            presentation: 10e-3,
            threshold: 128,
            transient: TransientConfig::default(),
            read_point: ReadPoint::End,
        }
    }
}

impl Schedule {
    pub fn steps(&self) -> usize {
        ((self.presentation / self.transient.dt).round() as usize).max(1)
    }
}

/// One row of the measurement log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub row: usize,
    pub label: u8,
    pub counts: u32,
    /// Simulated sense current, i.e. a perfectly calibrated reading.
    pub amperes: f64,
    /// Accounted wall-clock time after this row.
    pub elapsed_s: f64,
}

pub fn measurements_to_csv(rows: &[Measurement]) -> String {
    let mut s = String::from("row,label,counts,amperes,elapsed_s\n");
    for m in rows {
        let _ = writeln!(s, "{},{},{},{:?},{:?}", m.row, m.label, m.counts, m.amperes, m.elapsed_s);
    }
    s
}

/// Drives an assembled classifier row by row. Capacitor state persists
/// across rows; between rows the inputs are low, every charging diode
/// blocks and the idle time is not simulated.
pub struct Harness<'s> {
    sim: Simulator<'s>,
    sensor: Sensor,
    timing: TimingModel,
    schedule: Schedule,
    pins: usize,
    probe: String,
    elapsed: f64,
    rows: usize,
}

impl<'s> Harness<'s> {
    pub fn new(
        sys: &'s MnaSystem,
        sensor: SensorModel,
        timing: TimingModel,
        schedule: Schedule,
    ) -> Result<Self, McuError> {
        timing.validate()?;
        let mut transient = schedule.transient.clone();
        transient.t_end = transient.t_end.max(schedule.presentation);
        let sim = Simulator::new(sys, &transient)?;
        let pins = (0..).take_while(|k| sys.source_index(&pin_source(*k)).is_some()).count();
        if pins == 0 {
            return Err(McuError::InvalidConfig("network has no input pins".into()));
        }
        if sys.probes().iter().all(|(l, _)| l != SENSE_PROBE) {
            return Err(McuError::InvalidConfig(format!("network has no `{SENSE_PROBE}` probe")));
        }
        Ok(Self {
            sim,
            sensor: Sensor::new(sensor)?,
            timing,
            schedule,
            pins,
            probe: SENSE_PROBE.to_string(),
            elapsed: 0.0,
            rows: 0,
        })
    }

    pub fn simulator(&self) -> &Simulator<'s> {
        &self.sim
    }

    pub fn simulator_mut(&mut self) -> &mut Simulator<'s> {
        &mut self.sim
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn capacitor_voltages(&self) -> &[f64] {
        self.sim.capacitor_voltages()
    }

    pub fn set_capacitor_voltages(&mut self, v: &[f64]) -> Result<(), McuError> {
        Ok(self.sim.set_capacitor_voltages(v)?)
    }

    /// Sets an extra source (e.g. a target rail) for the next presentations.
    pub fn set_source(&mut self, name: &str, volts: f64) -> Result<(), McuError> {
        Ok(self.sim.set_source(name, Waveform::Dc(volts))?)
    }

    /// Presents one sample and returns the reading.
    pub fn present(&mut self, sample: &Sample) -> Result<Measurement, McuError> {
        let pins = encode_sample(sample, self.schedule.threshold, self.schedule.presentation)?;
        let workload = WorkloadSpec {
            n_classes: 1,
            rows_per_class: 1,
            writes_per_row: self.pins,
            reads_per_row: 1,
        };
        self.elapsed += row_cost(&workload, &self.timing).total();
        for k in 0..self.pins.min(pins.pin_count()) {
            self.sim.set_source(&pin_source(k), Waveform::Dc(pins.voltage(k)))?;
        }
        let steps = self.schedule.steps();
        let mut sum = 0.0;
        let mut last = 0.0;
        for _ in 0..steps {
            self.sim.step()?;
            last = self.sim.probe_current(&self.probe).unwrap_or(0.0);
            sum += last;
        }
        let amperes = match self.schedule.read_point {
            ReadPoint::End => last,
            ReadPoint::Mean => sum / steps as f64,
        };
        for k in 0..self.pins {
            self.sim.set_source(&pin_source(k), Waveform::Dc(0.0))?;
        }
        let m = Measurement {
            row: self.rows,
            label: sample.label,
            counts: self.sensor.read(amperes),
            amperes,
            elapsed_s: self.elapsed,
        };
        self.rows += 1;
        Ok(m)
    }
}

/// Presents every sample in order on one persistent circuit.
pub fn emulate_run(
    samples: &[Sample],
    sys: &MnaSystem,
    sensor: &SensorModel,
    timing: &TimingModel,
    schedule: &Schedule,
) -> Result<(Vec<Measurement>, f64), McuError> {
    let mut h = Harness::new(sys, sensor.clone(), timing.clone(), schedule.clone())?;
    let out = samples.iter().map(|s| h.present(s)).collect::<Result<Vec<_>, _>>()?;
    Ok((out, h.elapsed()))
}
