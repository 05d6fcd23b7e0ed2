//! Weight cells, summing layer and the 25-input classifier as netlists.
//!
//! A weight cell is `R3` from the input to an internal node `m`, `R1` from
//! `m` to the cell output, and a charging branch diode → `R2` → `C1` from `m`.
//! The diode points into the capacitor, so the capacitor only charges while
//! the input sits above the capacitor voltage and otherwise keeps its charge.
//! A charged capacitor diverts less current, so more reaches the output.
//!
//! With the cell output grounded, `R3` carries `I1 + I2`, `R1` carries `I2`
//! and the charging branch carries `I1`:
//!
//! ```text
//! V = a·I1 + b·∫I1 dt,   a = (R1R3 + R1R2 + R2R3)/R1,   b = (R3 + R1)/(R1·C1)
//! ```

use thiserror::Error;

use crate::circuit::{CircuitError, DiodeModel, Netlist, Trace, Waveform, GROUND};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellError {
    #[error("invalid cell parameters: {0}")]
    InvalidParams(String),
    #[error("at least one input is required")]
    NoInputs,
    #[error("charging branch is not forward conducting at t = {time:e} s")]
    WindowNotForwardConducting { time: f64 },
    #[error("empty search range: {0}")]
    EmptySearchRange(String),
    #[error("trace has no signal `{0}`")]
    MissingSignal(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Component values of one weight cell. `diode: None` replaces the charging
/// diode with a wire (the linear control).
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub c1: f64,
    pub diode: Option<DiodeModel>,
}

impl CellParams {
    /// 330 Ω / 10 Ω / 330 Ω / 10 µF with an ideal diode.
    pub fn module1() -> Self {
        Self {
            r1: 330.0,
            r2: 10.0,
            r3: 330.0,
            c1: 10e-6,
            diode: Some(DiodeModel::ideal()),
        }
    }

    /// Same as [`CellParams::module1`] with a 1 µF capacitor.
    pub fn module2() -> Self {
        Self {
            c1: 1e-6,
            ..Self::module1()
        }
    }

    pub fn with_diode(mut self, diode: Option<DiodeModel>) -> Self {
        self.diode = diode;
        self
    }

    pub fn validate(&self) -> Result<(), CellError> {
        for (name, v) in [("r1", self.r1), ("r2", self.r2), ("r3", self.r3), ("c1", self.c1)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CellError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Eq. 3 coefficients `(a, b)`.
    pub fn eq3_coefficients(&self) -> (f64, f64) {
        let a = (self.r1 * self.r3 + self.r1 * self.r2 + self.r2 * self.r3) / self.r1;
        let b = (self.r3 + self.r1) / (self.r1 * self.c1);
        (a, b)
    }

    /// Time constant of the charging branch with the output grounded.
    pub fn charge_time_constant(&self) -> f64 {
        let (a, b) = self.eq3_coefficients();
        a / b
    }
}

impl Default for CellParams {
    fn default() -> Self {
        Self::module1()
    }
}

/// Where the bottom of the charging branch returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CapReturn {
    /// To ground; the cell output only sees `R1`.
    #[default]
    Ground,
    /// To the cell output, making the cell a two-terminal series block.
    Output,
}

pub fn capacitor_name(cell: &str) -> String {
    format!("{cell}.C1")
}

/// Builds one cell named `name` between `input` and `output`. Element names
/// are `<name>.R1`, `.R2`, `.R3`, `.C1`, `.D`; internal nodes `<name>.m`,
/// `.d`, `.c`.
pub fn build_cell(
    name: &str,
    params: &CellParams,
    input: &str,
    output: &str,
    cap_return: CapReturn,
) -> Result<Netlist, CellError> {
    params.validate()?;
    let m = format!("{name}.m");
    let c = format!("{name}.c");
    let bottom = match cap_return {
        CapReturn::Ground => GROUND,
        CapReturn::Output => output,
    };
    let mut net = Netlist::new();
    net.resistor(&format!("{name}.R3"), input, &m, params.r3)
        .resistor(&format!("{name}.R1"), &m, output, params.r1);
    let branch_top = match &params.diode {
        Some(model) => {
            let d = format!("{name}.d");
            net.diode(&format!("{name}.D"), &m, &d, *model);
            d
        }
        None => m.clone(),
    };
    net.resistor(&format!("{name}.R2"), &branch_top, &c, params.r2)
        .capacitor(&capacitor_name(name), &c, bottom, params.c1, 0.0);
    Ok(net)
}

/// Module 1 cell: charging branch returned to ground.
pub fn build_module1(
    name: &str,
    params: &CellParams,
    input: &str,
    output: &str,
) -> Result<Netlist, CellError> {
    build_cell(name, params, input, output, CapReturn::Ground)
}

/// Module 2 cell; identical wiring, `params` normally [`CellParams::module2`].
pub fn build_module2(
    name: &str,
    params: &CellParams,
    input: &str,
    output: &str,
) -> Result<Netlist, CellError> {
    build_cell(name, params, input, output, CapReturn::Ground)
}

/// Adds probes `<name>.I1` (charging branch) and `<name>.I2` (through `R1`).
pub fn probe_cell(net: &mut Netlist, name: &str) {
    net.probe(&format!("{name}.I1"), &format!("{name}.R2"))
        .probe(&format!("{name}.I2"), &format!("{name}.R1"));
}

/// Module 3: one diode per input, anodes at the inputs, cathodes joined at
/// `output`. Diodes are named `<prefix>_<k>`.
pub fn build_module3(
    prefix: &str,
    inputs: &[String],
    output: &str,
    diode: &DiodeModel,
) -> Result<Netlist, CellError> {
    if inputs.is_empty() {
        return Err(CellError::NoInputs);
    }
    let mut net = Netlist::new();
    for (k, input) in inputs.iter().enumerate() {
        net.diode(&format!("{prefix}_{k:02}"), input, output, *diode);
    }
    Ok(net)
}

/// Full classifier wiring.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub n_inputs: usize,
    pub input_cells: Vec<CellParams>,
    /// `None` wires the cell outputs straight to the summing node.
    pub summing_diode: Option<DiodeModel>,
    pub output_cell: CellParams,
    pub sense_resistor: f64,
    pub supply: f64,
}

impl Default for NetworkTopology {
    fn default() -> Self {
        Self::uniform(25, CellParams::module1(), CellParams::module2())
    }
}

impl NetworkTopology {
    pub fn uniform(n_inputs: usize, input_cell: CellParams, output_cell: CellParams) -> Self {
        Self {
            n_inputs,
            input_cells: vec![input_cell; n_inputs],
            summing_diode: Some(DiodeModel::ideal()),
            output_cell,
            sense_resistor: 10.0,
            supply: 5.0,
        }
    }

    /// Every diode in the network replaced by a wire.
    pub fn linearized(&self) -> Self {
        let mut t = self.clone();
        t.input_cells.iter_mut().for_each(|c| c.diode = None);
        t.output_cell.diode = None;
        t.summing_diode = None;
        t
    }

    pub fn validate(&self) -> Result<(), CellError> {
        if self.n_inputs == 0 {
            return Err(CellError::NoInputs);
        }
        if self.input_cells.len() != self.n_inputs {
            return Err(CellError::InvalidParams(format!(
                "{} input cells for {} inputs",
                self.input_cells.len(),
                self.n_inputs
            )));
        }
        if !(self.sense_resistor.is_finite() && self.sense_resistor > 0.0) {
            return Err(CellError::InvalidParams("sense_resistor must be positive".into()));
        }
        if !(self.supply.is_finite() && self.supply > 0.0) {
            return Err(CellError::InvalidParams("supply must be positive".into()));
        }
        self.input_cells.iter().try_for_each(CellParams::validate)?;
        self.output_cell.validate()
    }
}

/// Label of the output current probe on the sense resistor.
pub const SENSE_PROBE: &str = "sense";
pub const SUM_NODE: &str = "sum";
pub const OUT_NODE: &str = "out";
pub const SENSE_RESISTOR: &str = "Rsense";
pub const OUTPUT_CELL: &str = "M2";

pub fn input_node(k: usize) -> String {
    format!("in{k:02}")
}

pub fn pin_source(k: usize) -> String {
    format!("P{k:02}")
}

pub fn input_cell(k: usize) -> String {
    format!("M1_{k:02}")
}

fn cell_output(k: usize) -> String {
    format!("h{k:02}")
}

/// Input pins `in00..` (each driven by source `P00..`, initially 0 V) →
/// Module 1 cells → Module 3 diodes into `sum` → Module 2 cell to `out` →
/// sense resistor to ground, probed as `sense`.
pub fn compose_classifier(topology: &NetworkTopology) -> Result<Netlist, CellError> {
    topology.validate()?;
    let mut net = Netlist::new();
    let mut outputs = Vec::with_capacity(topology.n_inputs);
    for (k, params) in topology.input_cells.iter().enumerate() {
        let input = input_node(k);
        let out = match topology.summing_diode {
            Some(_) => cell_output(k),
            None => SUM_NODE.to_string(),
        };
        net.source(&pin_source(k), &input, GROUND, Waveform::Dc(0.0));
        net.extend(build_module1(&input_cell(k), params, &input, &out)?);
        outputs.push(out);
    }
    if let Some(d) = &topology.summing_diode {
        net.extend(build_module3("M3", &outputs, SUM_NODE, d)?);
    }
    net.extend(build_module2(OUTPUT_CELL, &topology.output_cell, SUM_NODE, OUT_NODE)?);
    net.resistor(SENSE_RESISTOR, OUT_NODE, GROUND, topology.sense_resistor)
        .probe(SENSE_PROBE, SENSE_RESISTOR);
    Ok(net)
}

/// Two cells in series with an optional coupling diode between them:
/// source `V` → cell `A` → (`M3`) → cell `B` → ground. Both charging
/// branches return to their cell's output. Probes: `I1`/`I2` in `A`,
/// `I3`/`I4` in `B`, and `out`, the terminal current through `B.R3`.
pub fn build_cascade(
    first: &CellParams,
    second: &CellParams,
    coupling: Option<&DiodeModel>,
    stimulus: Waveform,
) -> Result<Netlist, CellError> {
    let mut net = Netlist::new();
    net.source("V", "in", GROUND, stimulus);
    net.extend(build_cell("A", first, "in", "x", CapReturn::Output)?);
    let mid = match coupling {
        Some(d) => {
            net.diode("M3", "x", "y", *d);
            "y"
        }
        None => "x",
    };
    net.extend(build_cell("B", second, mid, GROUND, CapReturn::Output)?);
    net.probe("I1", "A.R2")
        .probe("I2", "A.R1")
        .probe("I3", "B.R2")
        .probe("I4", "B.R1")
        .probe("out", "B.R3");
    Ok(net)
}

fn signal(trace: &Trace, name: &str) -> Result<Vec<f64>, CellError> {
    if let Some(p) = trace.probe(name) {
        return Ok(p.to_vec());
    }
    trace
        .node_or_ground(name)
        .ok_or_else(|| CellError::MissingSignal(name.to_string()))
}

/// Maximum of `|V − a·I1 − b·∫I1 dt| / max|V|` over samples with time in
/// `window` (whole trace if `None`). `V` is `input − output`; the integral
/// is a trapezoid sum from the start of the trace, which assumes the
/// capacitor starts uncharged.
pub fn eq3_residual(
    trace: &Trace,
    params: &CellParams,
    i1_probe: &str,
    input: &str,
    output: &str,
    window: Option<(f64, f64)>,
) -> Result<f64, CellError> {
    params.validate()?;
    let i1 = trace
        .probe(i1_probe)
        .ok_or_else(|| CellError::MissingSignal(i1_probe.to_string()))?;
    let vin = signal(trace, input)?;
    let vout = signal(trace, output)?;
    let (a, b) = params.eq3_coefficients();
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let in_window = |t: f64| t >= lo && t <= hi;

    let mut integral = 0.0;
    let mut vmax = 0.0f64;
    let mut worst = 0.0f64;
    for k in 0..trace.len() {
        if k > 0 {
            let h = trace.times[k] - trace.times[k - 1];
            integral += 0.5 * h * (i1[k] + i1[k - 1]);
        }
        let t = trace.times[k];
        if !in_window(t) {
            continue;
        }
        if i1[k] <= 0.0 {
            return Err(CellError::WindowNotForwardConducting { time: t });
        }
        let v = vin[k] - vout[k];
        vmax = vmax.max(v.abs());
        worst = worst.max((v - a * i1[k] - b * integral).abs());
    }
    if vmax == 0.0 {
        return Err(CellError::MissingSignal(format!("{input} is zero over the window")));
    }
    Ok(worst / vmax)
}

/// Search box for [`single_layer_fit_residual`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitSearch {
    pub r_range: (f64, f64),
    pub c_range: (f64, f64),
    /// Log-spaced points per parameter axis.
    pub grid_points: usize,
    /// Fit a cell with an ideal charging diode (`true`) or a wire.
    pub diode: bool,
    pub refine_iterations: usize,
}

impl Default for FitSearch {
    fn default() -> Self {
        Self {
            r_range: (1.0, 10e3),
            c_range: (0.1e-6, 100e-6),
            grid_points: 20,
            diode: true,
            refine_iterations: 2000,
        }
    }
}

impl FitSearch {
    fn validate(&self) -> Result<(), CellError> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi;
        if !ok(self.r_range) {
            return Err(CellError::EmptySearchRange(format!("r {:?}", self.r_range)));
        }
        if !ok(self.c_range) {
            return Err(CellError::EmptySearchRange(format!("c {:?}", self.c_range)));
        }
        if self.grid_points == 0 {
            return Err(CellError::EmptySearchRange("no grid points".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// RMS error normalized by the RMS of the target current.
    pub rms: f64,
    pub params: CellParams,
    pub evaluations: usize,
}

/// Terminal current of one cell with its output grounded, starting
/// uncharged, for a stimulus sampled at `times` and taken piecewise linear
/// in between. Ideal diode or wire only; the capacitor state is integrated
/// exactly over each interval.
pub fn single_cell_current(params: &CellParams, times: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    single_cell_current_into(
        [params.r1, params.r2, params.r3, params.c1],
        params.diode.is_some(),
        times,
        v,
        &mut out,
    );
    out
}

fn single_cell_current_into(p: [f64; 4], diode: bool, times: &[f64], v: &[f64], out: &mut Vec<f64>) {
    let [r1, r2, r3, c1] = p;
    let k = r1 / (r1 + r3);
    let rth = r2 + r1 * r3 / (r1 + r3);
    let tau = rth * c1;
    let g = 1.0 / (r1 + r3);
    out.clear();
    let mut vc = 0.0;
    let mut last_h = f64::NAN;
    let mut decay = 0.0;
    for n in 0..times.len() {
        if n > 0 {
            let h = times[n] - times[n - 1];
            if h != last_h {
                decay = (-h / tau).exp();
                last_h = h;
            }
            let (u0, u1) = (k * v[n - 1], k * v[n]);
            let slope_tau = (u1 - u0) / h * tau;
            let next = u1 - slope_tau + (vc - u0 + slope_tau) * decay;
            vc = if diode { next.max(vc) } else { next };
        }
        let mut i1 = (k * v[n] - vc) / rth;
        if diode && i1 < 0.0 {
            i1 = 0.0;
        }
        out.push(v[n] * g + k * i1);
    }
}

fn log_grid((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 || lo == hi {
        return vec![(lo * hi).sqrt()];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn rms_error(model: &[f64], target: &[f64], norm: f64) -> f64 {
    let sse: f64 = model.iter().zip(target).map(|(m, t)| (m - t) * (m - t)).sum();
    (sse / target.len() as f64).sqrt() / norm
}

/// Best normalized RMS distance between the terminal current `current` of a
/// multi-cell network driven by the voltage at node `input` and the terminal
/// current of any single cell inside `search`. A full log-spaced grid over
/// (R1, R2, R3, C1) on a decimated time axis seeds a bounded Nelder–Mead
/// refinement on the full trace.
pub fn single_layer_fit_residual(
    trace: &Trace,
    input: &str,
    current: &str,
    search: &FitSearch,
) -> Result<FitResult, CellError> {
    search.validate()?;
    let v = signal(trace, input)?;
    let target = trace
        .probe(current)
        .ok_or_else(|| CellError::MissingSignal(current.to_string()))?;
    if trace.len() < 2 {
        return Err(CellError::MissingSignal("trace needs at least two samples".into()));
    }
    let norm = (target.iter().map(|x| x * x).sum::<f64>() / target.len() as f64).sqrt();
    if norm == 0.0 {
        return Err(CellError::MissingSignal(format!("{current} is identically zero")));
    }

    let stride = (trace.len() / 1000).max(1);
    let idx: Vec<usize> = (0..trace.len()).step_by(stride).collect();
    let t_s: Vec<f64> = idx.iter().map(|&i| trace.times[i]).collect();
    let v_s: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
    let y_s: Vec<f64> = idx.iter().map(|&i| target[i]).collect();
    let norm_s = (y_s.iter().map(|x| x * x).sum::<f64>() / y_s.len() as f64).sqrt();

    let rs = log_grid(search.r_range, search.grid_points);
    let cs = log_grid(search.c_range, search.grid_points);
    let mut buf = Vec::with_capacity(t_s.len());
    let mut best = (f64::INFINITY, [0.0; 4]);
    let mut evaluations = 0;
    for &r1 in &rs {
        for &r2 in &rs {
            for &r3 in &rs {
                for &c1 in &cs {
                    let p = [r1, r2, r3, c1];
                    single_cell_current_into(p, search.diode, &t_s, &v_s, &mut buf);
                    evaluations += 1;
                    let e = rms_error(&buf, &y_s, norm_s);
                    if e < best.0 {
                        best = (e, p);
                    }
                }
            }
        }
    }

    let lo = [search.r_range.0, search.r_range.0, search.r_range.0, search.c_range.0].map(f64::ln);
    let hi = [search.r_range.1, search.r_range.1, search.r_range.1, search.c_range.1].map(f64::ln);
    let clamp = |x: [f64; 4]| -> [f64; 4] { std::array::from_fn(|i| x[i].clamp(lo[i], hi[i])) };
    let mut full = Vec::with_capacity(trace.len());
    let mut objective = |x: [f64; 4]| -> f64 {
        let p = clamp(x).map(f64::exp);
        single_cell_current_into(p, search.diode, &trace.times, &v, &mut full);
        rms_error(&full, target, norm)
    };
    let start = best.1.map(f64::ln);
    let step: [f64; 4] = std::array::from_fn(|i| {
        let n = search.grid_points.max(2) as f64 - 1.0;
        ((hi[i] - lo[i]) / n).max(0.05)
    });
    let (x, fx, n_eval) = nelder_mead(&mut objective, start, step, search.refine_iterations);
    evaluations += n_eval;
    let p = clamp(x).map(f64::exp);
    let diode = search.diode.then(DiodeModel::ideal);
    Ok(FitResult {
        rms: fx,
        params: CellParams {
            r1: p[0],
            r2: p[1],
            r3: p[2],
            c1: p[3],
            diode,
        },
        evaluations,
    })
}

fn nelder_mead<const N: usize>(
    f: &mut impl FnMut([f64; N]) -> f64,
    start: [f64; N],
    step: [f64; N],
    max_iter: usize,
) -> ([f64; N], f64, usize) {
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, f(start)));
    for i in 0..N {
        let mut x = start;
        x[i] += step[i];
        simplex.push((x, f(x)));
    }
    let mut evals = N + 1;
    let lerp = |a: &[f64; N], b: &[f64; N], t: f64| -> [f64; N] {
        std::array::from_fn(|i| a[i] + t * (b[i] - a[i]))
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[N].1 - simplex[0].1).abs() <= 1e-12 * simplex[0].1.abs().max(1e-12) {
            break;
        }
        let centroid: [f64; N] = std::array::from_fn(|i| {
            simplex[..N].iter().map(|s| s.0[i]).sum::<f64>() / N as f64
        });
        let worst = simplex[N];
        let xr = lerp(&centroid, &worst.0, -1.0);
        let fr = f(xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = lerp(&centroid, &worst.0, -2.0);
            let fe = f(xe);
            evals += 1;
            simplex[N] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (xr, fr);
        } else {
            let t = if fr < worst.1 { -0.5 } else { 0.5 };
            let xc = lerp(&centroid, &worst.0, t);
            let fc = f(xc);
            evals += 1;
            if fc < worst.1.min(fr) {
                simplex[N] = (xc, fc);
            } else {
                let best = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    s.0 = lerp(&best, &s.0, 0.5);
                    s.1 = f(s.0);
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1, evals)
}
