//! Fixed-step transient analysis.
//!
//! Each step solves the companion-model MNA system. Ideal-switch diodes are
//! resolved by iterating over conduction states until complementarity holds
//! (conducting diodes carry nonnegative current, blocking diodes see
//! nonpositive voltage); Shockley diodes are linearized by Newton iteration
//! inside each state. For networks without Shockley diodes the matrix only
//! depends on the diode states, so factorizations are cached per state.

use std::collections::{HashMap, HashSet};

use nalgebra::{DVector, Dyn, LU};

use super::mna::{assemble, CapMode, MnaSystem, Slot};
use super::netlist::{DiodeModel, Netlist, Waveform};
use super::trace::{Trace, TraceRecorder};
use super::CircuitError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    BackwardEuler,
    #[default]
    Trapezoidal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientConfig {
    /// Fixed step, seconds.
    pub dt: f64,
    /// End time, seconds.
    pub t_end: f64,
    pub integrator: Integrator,
    /// KCL / Newton residual tolerance, amperes.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub rng_seed: u64,
}

impl Default for TransientConfig {
    fn default() -> Self {
        Self {
            dt: 1e-6,
            t_end: 10e-3,
            integrator: Integrator::Trapezoidal,
            newton_tol: 1e-9,
            newton_max_iter: 50,
            rng_seed: 0,
        }
    }
}

impl TransientConfig {
    pub fn validate(&self) -> Result<(), CircuitError> {
        let bad = |m: &str| Err(CircuitError::InvalidConfig(m.to_string()));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return bad("t_end must be at least dt");
        }
        if !(self.newton_tol.is_finite() && self.newton_tol > 0.0) {
            return bad("newton_tol must be positive");
        }
        if self.newton_max_iter == 0 {
            return bad("newton_max_iter must be at least 1");
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

const MAX_TOGGLES: usize = 100;
const CACHE_LIMIT: usize = 48;
/// Blocking diodes switch on once their forward voltage exceeds this.
const SWITCH_ON_VOLTS: f64 = 1e-9;

#[derive(Debug)]
enum StepFail {
    Newton(f64),
    Switching,
    NonFinite,
    Singular,
}

#[derive(Hash, PartialEq, Eq, Clone)]
struct CacheKey {
    mode: u64,
    mask: Vec<bool>,
}

fn mode_bits(mode: CapMode) -> u64 {
    match mode {
        CapMode::Fixed => 0,
        CapMode::Companion { scale } => scale.to_bits(),
    }
}

/// Counters for performance diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub steps: usize,
    pub factorizations: usize,
    pub toggles: usize,
    pub retries: usize,
}

struct PointSolution {
    x: DVector<f64>,
    mask: Vec<bool>,
    diode_v: Vec<f64>,
}

/// Stepping state for one assembled system. Capacitor voltages and source
/// waveforms can be changed between steps, which is how a sequence of
/// presentations is run on persistent capacitor state.
pub struct Simulator<'s> {
    sys: &'s MnaSystem,
    cfg: TransientConfig,
    time: f64,
    sources: Vec<Waveform>,
    cap_v: Vec<f64>,
    cap_i: Vec<f64>,
    diode_on: Vec<bool>,
    diode_v: Vec<f64>,
    x: Vec<f64>,
    restart: bool,
    cache: HashMap<CacheKey, LU<f64, Dyn, Dyn>>,
    stats: SolverStats,
}

fn shockley_current(model: &DiodeModel, v: f64) -> (f64, f64) {
    match *model {
        DiodeModel::Shockley {
            saturation_current: is,
            emission_coefficient: n,
            thermal_voltage: vt,
        } => {
            let nvt = n * vt;
            let arg = (v / nvt).min(200.0);
            let e = arg.exp();
            (is * (e - 1.0), is * e / nvt)
        }
        DiodeModel::IdealSwitch { .. } => (0.0, 0.0),
    }
}

/// SPICE-style junction voltage limiting.
fn limit_junction(model: &DiodeModel, vnew: f64, vold: f64) -> f64 {
    let DiodeModel::Shockley {
        saturation_current: is,
        emission_coefficient: n,
        thermal_voltage: vt,
    } = *model
    else {
        return vnew;
    };
    let nvt = n * vt;
    let vcrit = nvt * (nvt / (std::f64::consts::SQRT_2 * is)).ln();
    if vnew > vcrit && (vnew - vold).abs() > 2.0 * nvt {
        if vold > 0.0 {
            let arg = 1.0 + (vnew - vold) / nvt;
            if arg > 0.0 {
                vold + nvt * arg.ln()
            } else {
                vcrit
            }
        } else {
            nvt * (vnew / nvt).ln()
        }
    } else {
        vnew
    }
}

impl<'s> Simulator<'s> {
    pub fn new(sys: &'s MnaSystem, cfg: &TransientConfig) -> Result<Self, CircuitError> {
        cfg.validate()?;
        Ok(Self {
            sys,
            cfg: cfg.clone(),
            time: 0.0,
            sources: sys.sources.iter().map(|s| s.waveform.clone()).collect(),
            cap_v: sys.capacitors.iter().map(|c| c.initial_voltage).collect(),
            cap_i: vec![0.0; sys.capacitors.len()],
            diode_on: vec![false; sys.diodes.len()],
            diode_v: vec![0.0; sys.diodes.len()],
            x: vec![0.0; sys.dim()],
            restart: true,
            cache: HashMap::new(),
            stats: SolverStats::default(),
        })
    }

    pub fn system(&self) -> &MnaSystem {
        self.sys
    }

    pub fn config(&self) -> &TransientConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
        self.restart = true;
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    pub fn capacitor_voltages(&self) -> &[f64] {
        &self.cap_v
    }

    pub fn capacitor_currents(&self) -> &[f64] {
        &self.cap_i
    }

    /// Overwrites capacitor state; the next step restarts the integrator.
    pub fn set_capacitor_voltages(&mut self, v: &[f64]) -> Result<(), CircuitError> {
        if v.len() != self.cap_v.len() {
            return Err(CircuitError::ShapeMismatch(format!(
                "expected {} capacitor voltages, got {}",
                self.cap_v.len(),
                v.len()
            )));
        }
        self.cap_v.copy_from_slice(v);
        self.cap_i.iter_mut().for_each(|i| *i = 0.0);
        self.restart = true;
        Ok(())
    }

    /// Replaces a source waveform; the next step restarts the integrator.
    pub fn set_source(&mut self, name: &str, waveform: Waveform) -> Result<(), CircuitError> {
        let idx = self
            .sys
            .source_index(name)
            .ok_or_else(|| CircuitError::UnknownElement(name.to_string()))?;
        self.sources[idx] = waveform;
        self.restart = true;
        Ok(())
    }

    pub fn diode_states(&self) -> &[bool] {
        &self.diode_on
    }

    /// Node voltages in [`MnaSystem::node_names`] order.
    pub fn node_voltages(&self) -> &[f64] {
        &self.x[..self.sys.node_count()]
    }

    pub fn node_voltage(&self, name: &str) -> Option<f64> {
        if name == super::GROUND {
            return Some(0.0);
        }
        self.sys.node_index(name).map(|i| self.x[i])
    }

    /// Current through element `el` (netlist index), first node to second.
    pub fn element_current(&self, el: usize) -> f64 {
        match self.sys.slots[el] {
            Slot::Resistor(k) => {
                let r = &self.sys.resistors[k];
                MnaSystem::vdiff(&self.x, r.a, r.b) * r.g
            }
            Slot::Capacitor(k) => self.cap_i[k],
            Slot::Diode(k) => self.x[self.sys.diodes[k].row],
            Slot::Source(k) => self.x[self.sys.sources[k].row],
        }
    }

    pub fn probe_current(&self, label: &str) -> Option<f64> {
        self.sys
            .probes()
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, el)| self.element_current(*el))
    }

    fn lu(&mut self, mode: CapMode, mask: &[bool]) -> &LU<f64, Dyn, Dyn> {
        let key = CacheKey {
            mode: mode_bits(mode),
            mask: mask.to_vec(),
        };
        if !self.cache.contains_key(&key) {
            if self.cache.len() >= CACHE_LIMIT {
                self.cache.clear();
            }
            let lin = vec![(0.0, 0.0); mask.len()];
            let lu = self.sys.matrix(mode, mask, &lin).lu();
            self.stats.factorizations += 1;
            self.cache.insert(key.clone(), lu);
        }
        &self.cache[&key]
    }

    fn linear_solve(
        &mut self,
        mode: CapMode,
        t: f64,
        hist: &[f64],
        mask: &[bool],
        diode_v: &mut [f64],
    ) -> Result<DVector<f64>, StepFail> {
        let sys = self.sys;
        if !sys.has_shockley() {
            let b = sys.rhs(mode, t, &self.sources, hist, &[]);
            let x = self.lu(mode, mask).solve(&b).ok_or(StepFail::Singular)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(StepFail::NonFinite);
            }
            return Ok(x);
        }
        let mut worst = f64::INFINITY;
        for _ in 0..self.cfg.newton_max_iter {
            let lin: Vec<(f64, f64)> = sys
                .diodes
                .iter()
                .zip(diode_v.iter())
                .map(|(d, &v)| {
                    let (i, g) = shockley_current(&d.model, v);
                    (g, i - g * v)
                })
                .collect();
            let m = sys.matrix(mode, mask, &lin);
            self.stats.factorizations += 1;
            let b = sys.rhs(mode, t, &self.sources, hist, &lin);
            let x = m.lu().solve(&b).ok_or(StepFail::Singular)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(StepFail::NonFinite);
            }
            worst = 0.0;
            let mut limited = false;
            for (k, d) in sys.diodes.iter().enumerate() {
                if d.model.is_ideal() {
                    continue;
                }
                let v = MnaSystem::vdiff(x.as_slice(), d.a, d.b);
                let (i_true, _) = shockley_current(&d.model, v);
                worst = f64::max(worst, (i_true - x[d.row]).abs());
                let v_lim = limit_junction(&d.model, v, diode_v[k]);
                if v_lim != v {
                    limited = true;
                }
                diode_v[k] = v_lim;
            }
            if worst < self.cfg.newton_tol && !limited {
                return Ok(x);
            }
        }
        Err(StepFail::Newton(worst))
    }

    /// Solves one time point, iterating ideal-diode states to a consistent set.
    fn solve_point(&mut self, mode: CapMode, t: f64, hist: &[f64]) -> Result<PointSolution, StepFail> {
        let sys = self.sys;
        let tol = self.cfg.newton_tol;
        let mut mask = self.diode_on.clone();
        let mut diode_v = self.diode_v.clone();
        let mut visited = HashSet::new();
        visited.insert(mask.clone());
        let mut toggles = 0usize;
        // single-toggle alternatives to try when a state turns out singular
        // (for example two conducting ideal diodes in parallel)
        let mut alternatives: Vec<Vec<bool>> = Vec::new();
        loop {
            let x = match self.linear_solve(mode, t, hist, &mask, &mut diode_v) {
                Ok(x) => x,
                Err(StepFail::Singular | StepFail::NonFinite) if !alternatives.is_empty() => {
                    let Some(next) = alternatives.pop() else { unreachable!() };
                    toggles += 1;
                    if toggles > MAX_TOGGLES {
                        return Err(StepFail::Switching);
                    }
                    mask = next;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut violators: Vec<(usize, f64)> = Vec::new();
            for (k, d) in sys.diodes.iter().enumerate() {
                if !d.model.is_ideal() {
                    continue;
                }
                if mask[k] {
                    let i = x[d.row];
                    if i < -tol {
                        violators.push((k, -i * 1e3));
                    }
                } else {
                    let v = MnaSystem::vdiff(x.as_slice(), d.a, d.b);
                    if v > SWITCH_ON_VOLTS {
                        violators.push((k, v));
                    }
                }
            }
            if violators.is_empty() {
                self.stats.toggles += toggles;
                return Ok(PointSolution { x, mask, diode_v });
            }
            violators.sort_by(|a, b| a.1.total_cmp(&b.1));
            alternatives = violators
                .iter()
                .map(|(k, _)| {
                    let mut m = mask.clone();
                    m[*k] = !m[*k];
                    m
                })
                .filter(|m| !visited.contains(m))
                .collect();
            let mut next = mask.clone();
            for (k, _) in &violators {
                next[*k] = !next[*k];
            }
            let mut count = violators.len();
            if visited.contains(&next) {
                // flipping every violator cycles; fall back to the worst one
                next = mask.clone();
                let (k, _) = violators
                    .iter()
                    .copied()
                    .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
                next[k] = !next[k];
                count = 1;
            }
            toggles += count;
            if toggles > MAX_TOGGLES {
                return Err(StepFail::Switching);
            }
            visited.insert(next.clone());
            mask = next;
        }
    }

    /// Solves the operating point at the current time with capacitor
    /// voltages held, giving consistent capacitor currents for the
    /// trapezoidal history.
    pub fn initialize(&mut self) -> Result<(), CircuitError> {
        let hist = self.cap_v.clone();
        let sol = self
            .solve_point(CapMode::Fixed, self.time, &hist)
            .map_err(|e| self.fail(e))?;
        let dim = self.sys.dim();
        for k in 0..self.cap_i.len() {
            self.cap_i[k] = sol.x[dim + k];
        }
        self.x.copy_from_slice(&sol.x.as_slice()[..dim]);
        self.diode_on = sol.mask;
        self.diode_v = sol.diode_v;
        self.restart = false;
        Ok(())
    }

    fn fail(&self, e: StepFail) -> CircuitError {
        match e {
            StepFail::Newton(residual) => CircuitError::NewtonDivergence {
                time: self.time,
                residual,
            },
            StepFail::Switching => CircuitError::SwitchingDidNotSettle { time: self.time },
            StepFail::NonFinite => CircuitError::NonFiniteState(self.time),
            StepFail::Singular => {
                CircuitError::SingularTopology(format!("singular system at t = {:e} s", self.time))
            }
        }
    }

    /// Attempts one step of size `h`. State is untouched on failure.
    fn try_step(&mut self, h: f64, backward_euler: bool) -> Result<bool, StepFail> {
        let scale = if backward_euler { 1.0 / h } else { 2.0 / h };
        let hist: Vec<f64> = self
            .sys
            .capacitors
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let g = scale * c.farads;
                if backward_euler {
                    -g * self.cap_v[k]
                } else {
                    -g * self.cap_v[k] - self.cap_i[k]
                }
            })
            .collect();
        let t_next = self.time + h;
        let sol = self.solve_point(CapMode::Companion { scale }, t_next, &hist)?;
        for (k, c) in self.sys.capacitors.iter().enumerate() {
            let v = MnaSystem::vdiff(sol.x.as_slice(), c.a, c.b);
            self.cap_v[k] = v;
            self.cap_i[k] = scale * c.farads * v + hist[k];
        }
        let switched = sol.mask != self.diode_on;
        self.x.copy_from_slice(sol.x.as_slice());
        self.diode_on = sol.mask;
        self.diode_v = sol.diode_v;
        self.time = t_next;
        Ok(switched)
    }

    /// Advances one `dt`. On failure the step is retried once as ten
    /// substeps of `dt / 10`.
    pub fn step(&mut self) -> Result<(), CircuitError> {
        let trapezoidal = self.cfg.integrator == Integrator::Trapezoidal;
        let be = self.restart || !trapezoidal;
        self.stats.steps += 1;
        match self.try_step(self.cfg.dt, be) {
            Ok(switched) => {
                // a conduction change breaks the trapezoidal current history
                self.restart = switched && trapezoidal;
                Ok(())
            }
            Err(_) => {
                self.stats.retries += 1;
                let h = self.cfg.dt / 10.0;
                let mut be = true;
                for _ in 0..10 {
                    let switched = self.try_step(h, be).map_err(|e| self.fail(e))?;
                    be = !trapezoidal || switched;
                }
                self.restart = be && trapezoidal;
                Ok(())
            }
        }
    }

    /// Fallback initial point when the pinned-capacitor solve is degenerate
    /// (for example a conducting ideal diode directly across a charged
    /// capacitor): a backward-Euler step of `dt * 1e-6` whose result is
    /// reported at the current time.
    pub fn initialize_impulsive(&mut self) -> Result<(), CircuitError> {
        let t0 = self.time;
        self.try_step(self.cfg.dt * 1e-6, true)
            .map_err(|e| self.fail(e))?;
        self.time = t0;
        self.restart = true;
        Ok(())
    }

    /// Marks the integrator history as stale (after an external change).
    pub fn restart(&mut self) {
        self.restart = true;
    }
}

/// Runs a transient analysis from a consistent initial point at `t = 0`.
pub fn transient_solve(netlist: &Netlist, config: &TransientConfig) -> Result<Trace, CircuitError> {
    config.validate()?;
    let sys = assemble(netlist)?;
    let mut sim = Simulator::new(&sys, config)?;
    if sim.initialize().is_err() {
        sim.initialize_impulsive()?;
    }
    let mut rec = TraceRecorder::new(&sys, config.steps() + 1);
    rec.record(&sim);
    for _ in 0..config.steps() {
        sim.step()?;
        rec.record(&sim);
    }
    Ok(rec.finish(config.integrator))
}
