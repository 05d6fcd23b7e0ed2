//! Modified nodal analysis: node ordering and element stamps.
//!
//! Unknown vector layout: node voltages (ground excluded), then one branch
//! current per voltage source, then one branch current per diode. When the
//! capacitors are pinned to fixed voltages (consistent initial point) one
//! extra branch current per capacitor follows.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::netlist::{DiodeModel, ElementKind, Netlist, Waveform, GROUND};
use super::CircuitError;

#[derive(Debug, Clone)]
pub(crate) struct ResistorStamp {
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub g: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct CapacitorStamp {
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub farads: f64,
    pub initial_voltage: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct DiodeStamp {
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub model: DiodeModel,
    pub row: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SourceStamp {
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub waveform: Waveform,
    pub row: usize,
}

/// Which stamp table an element lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    Resistor(usize),
    Capacitor(usize),
    Diode(usize),
    Source(usize),
}

/// How capacitors enter the matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum CapMode {
    /// Capacitor voltages pinned (extra branch unknowns).
    Fixed,
    /// Companion conductance `scale * C` (`1/dt` backward Euler, `2/dt` trapezoidal).
    Companion { scale: f64 },
}

/// Assembled, immutable description of a netlist's MNA system.
#[derive(Debug, Clone)]
pub struct MnaSystem {
    netlist: Netlist,
    node_names: Vec<String>,
    node_index: HashMap<String, usize>,
    pub(crate) resistors: Vec<ResistorStamp>,
    pub(crate) capacitors: Vec<CapacitorStamp>,
    pub(crate) diodes: Vec<DiodeStamp>,
    pub(crate) sources: Vec<SourceStamp>,
    pub(crate) slots: Vec<Slot>,
    probes: Vec<(String, usize)>,
}

/// Validates `netlist` and builds its MNA descriptor.
pub fn assemble(netlist: &Netlist) -> Result<MnaSystem, CircuitError> {
    netlist.validate()?;
    let node_names = netlist.nodes();
    let node_index: HashMap<String, usize> = node_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    let idx = |n: &str| -> Option<usize> {
        if n == GROUND {
            None
        } else {
            Some(node_index[n])
        }
    };

    let n_nodes = node_names.len();
    let n_sources = netlist.count_where(|k| matches!(k, ElementKind::VoltageSource(_)));
    let mut sys = MnaSystem {
        netlist: netlist.clone(),
        node_names: node_names.clone(),
        node_index: node_index.clone(),
        resistors: Vec::new(),
        capacitors: Vec::new(),
        diodes: Vec::new(),
        sources: Vec::new(),
        slots: Vec::new(),
        probes: Vec::new(),
    };
    for e in netlist.elements() {
        let (a, b) = (idx(&e.nodes[0]), idx(&e.nodes[1]));
        let slot = match &e.kind {
            ElementKind::Resistor { ohms } => {
                sys.resistors.push(ResistorStamp { a, b, g: 1.0 / ohms });
                Slot::Resistor(sys.resistors.len() - 1)
            }
            ElementKind::Capacitor {
                farads,
                initial_voltage,
            } => {
                sys.capacitors.push(CapacitorStamp {
                    a,
                    b,
                    farads: *farads,
                    initial_voltage: *initial_voltage,
                });
                Slot::Capacitor(sys.capacitors.len() - 1)
            }
            ElementKind::Diode(model) => {
                let row = n_nodes + n_sources + sys.diodes.len();
                sys.diodes.push(DiodeStamp {
                    a,
                    b,
                    model: *model,
                    row,
                });
                Slot::Diode(sys.diodes.len() - 1)
            }
            ElementKind::VoltageSource(w) => {
                let row = n_nodes + sys.sources.len();
                sys.sources.push(SourceStamp {
                    a,
                    b,
                    waveform: w.clone(),
                    row,
                });
                Slot::Source(sys.sources.len() - 1)
            }
        };
        sys.slots.push(slot);
    }
    for p in netlist.probes() {
        let el = netlist
            .element_index(&p.element)
            .ok_or_else(|| CircuitError::UnknownElement(p.element.clone()))?;
        sys.probes.push((p.label.clone(), el));
    }

    // exact singularity (e.g. a loop of voltage sources) shows up as a
    // failed factorization; blocking diodes keep their shunt so they do not
    // hide floating nodes
    let on = vec![false; sys.diodes.len()];
    let lin = vec![(0.0, 0.0); sys.diodes.len()];
    let m = sys.matrix(CapMode::Companion { scale: 1e6 }, &on, &lin);
    if m.lu().solve(&DVector::zeros(sys.dim())).is_none() {
        return Err(CircuitError::SingularTopology(
            "system matrix is singular with all diodes blocking".to_string(),
        ));
    }
    Ok(sys)
}

impl MnaSystem {
    pub fn netlist(&self) -> &Netlist {
        &self.netlist
    }

    /// Non-ground node names in unknown order.
    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.node_index.get(name).copied()
    }

    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    /// Size of the companion-mode system.
    pub fn dim(&self) -> usize {
        self.node_names.len() + self.sources.len() + self.diodes.len()
    }

    pub fn capacitor_count(&self) -> usize {
        self.capacitors.len()
    }

    pub fn diode_count(&self) -> usize {
        self.diodes.len()
    }

    pub fn has_shockley(&self) -> bool {
        self.diodes.iter().any(|d| !d.model.is_ideal())
    }

    pub fn probes(&self) -> &[(String, usize)] {
        &self.probes
    }

    /// Element names in netlist order.
    pub fn element_names(&self) -> Vec<String> {
        self.netlist.elements().iter().map(|e| e.name.clone()).collect()
    }

    /// Capacitor element names in state order.
    pub fn capacitor_names(&self) -> Vec<String> {
        self.slots
            .iter()
            .zip(self.netlist.elements())
            .filter(|(s, _)| matches!(s, Slot::Capacitor(_)))
            .map(|(_, e)| e.name.clone())
            .collect()
    }

    pub fn source_index(&self, name: &str) -> Option<usize> {
        let el = self.netlist.element_index(name)?;
        match self.slots[el] {
            Slot::Source(i) => Some(i),
            _ => None,
        }
    }

    pub fn capacitor_index(&self, name: &str) -> Option<usize> {
        let el = self.netlist.element_index(name)?;
        match self.slots[el] {
            Slot::Capacitor(i) => Some(i),
            _ => None,
        }
    }

    pub(crate) fn full_dim(&self, mode: CapMode) -> usize {
        match mode {
            CapMode::Fixed => self.dim() + self.capacitors.len(),
            CapMode::Companion { .. } => self.dim(),
        }
    }

    /// System matrix for the given diode states. `lin[d] = (g, ieq)` is the
    /// linearization `i = g * v + ieq` of Shockley diode `d` (ignored for
    /// ideal switches).
    pub(crate) fn matrix(&self, mode: CapMode, diode_on: &[bool], lin: &[(f64, f64)]) -> DMatrix<f64> {
        let n = self.full_dim(mode);
        let mut m = DMatrix::<f64>::zeros(n, n);
        let stamp_g = |m: &mut DMatrix<f64>, a: Option<usize>, b: Option<usize>, g: f64| {
            if let Some(a) = a {
                m[(a, a)] += g;
            }
            if let Some(b) = b {
                m[(b, b)] += g;
            }
            if let (Some(a), Some(b)) = (a, b) {
                m[(a, b)] -= g;
                m[(b, a)] -= g;
            }
        };
        let stamp_branch = |m: &mut DMatrix<f64>, a: Option<usize>, b: Option<usize>, row: usize| {
            if let Some(a) = a {
                m[(a, row)] += 1.0;
            }
            if let Some(b) = b {
                m[(b, row)] -= 1.0;
            }
        };
        // row `row` reads coef * (v_a - v_b)
        let stamp_vdiff = |m: &mut DMatrix<f64>, a: Option<usize>, b: Option<usize>, row: usize, coef: f64| {
            if let Some(a) = a {
                m[(row, a)] += coef;
            }
            if let Some(b) = b {
                m[(row, b)] -= coef;
            }
        };

        for r in &self.resistors {
            stamp_g(&mut m, r.a, r.b, r.g);
        }
        match mode {
            CapMode::Companion { scale } => {
                for c in &self.capacitors {
                    stamp_g(&mut m, c.a, c.b, scale * c.farads);
                }
            }
            CapMode::Fixed => {
                for (k, c) in self.capacitors.iter().enumerate() {
                    let row = self.dim() + k;
                    stamp_branch(&mut m, c.a, c.b, row);
                    stamp_vdiff(&mut m, c.a, c.b, row, 1.0);
                }
            }
        }
        for s in &self.sources {
            stamp_branch(&mut m, s.a, s.b, s.row);
            stamp_vdiff(&mut m, s.a, s.b, s.row, 1.0);
        }
        for (k, d) in self.diodes.iter().enumerate() {
            stamp_branch(&mut m, d.a, d.b, d.row);
            match d.model {
                DiodeModel::IdealSwitch { shunt_conductance } => {
                    if diode_on[k] {
                        stamp_vdiff(&mut m, d.a, d.b, d.row, 1.0);
                    } else {
                        m[(d.row, d.row)] = 1.0;
                        stamp_vdiff(&mut m, d.a, d.b, d.row, -shunt_conductance);
                    }
                }
                DiodeModel::Shockley { .. } => {
                    m[(d.row, d.row)] = 1.0;
                    stamp_vdiff(&mut m, d.a, d.b, d.row, -lin[k].0);
                }
            }
        }
        m
    }

    /// Right-hand side. `cap_hist[c]` is the companion history current of
    /// capacitor `c` (or its pinned voltage in [`CapMode::Fixed`]).
    pub(crate) fn rhs(
        &self,
        mode: CapMode,
        t: f64,
        sources: &[Waveform],
        cap_hist: &[f64],
        lin: &[(f64, f64)],
    ) -> DVector<f64> {
        let mut b = DVector::<f64>::zeros(self.full_dim(mode));
        match mode {
            CapMode::Companion { .. } => {
                for (c, h) in self.capacitors.iter().zip(cap_hist) {
                    if let Some(a) = c.a {
                        b[a] -= h;
                    }
                    if let Some(n) = c.b {
                        b[n] += h;
                    }
                }
            }
            CapMode::Fixed => {
                for (k, v) in cap_hist.iter().enumerate() {
                    b[self.dim() + k] = *v;
                }
            }
        }
        for (s, w) in self.sources.iter().zip(sources) {
            b[s.row] = w.value(t);
        }
        for (k, d) in self.diodes.iter().enumerate() {
            if !d.model.is_ideal() {
                b[d.row] = lin[k].1;
            }
        }
        b
    }

    /// Voltage across `(a, b)` read from a solution vector.
    pub(crate) fn vdiff(x: &[f64], a: Option<usize>, b: Option<usize>) -> f64 {
        a.map_or(0.0, |i| x[i]) - b.map_or(0.0, |i| x[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::netlist::Waveform;

    #[test]
    fn resistor_across_source_is_two_nodes() {
        let mut n = Netlist::new();
        n.source("V1", "a", "0", Waveform::Dc(5.0))
            .resistor("R1", "a", "0", 330.0);
        let sys = assemble(&n).unwrap();
        assert_eq!(sys.node_count(), 1);
        // one node + one source branch
        assert_eq!(sys.dim(), 2);
        let m = sys.matrix(CapMode::Companion { scale: 1.0 }, &[], &[]);
        let b = sys.rhs(CapMode::Companion { scale: 1.0 }, 0.0, &[Waveform::Dc(5.0)], &[], &[]);
        let x = m.lu().solve(&b).unwrap();
        assert!((x[0] - 5.0).abs() < 1e-12);
        assert!((x[1] + 5.0 / 330.0).abs() < 1e-15);
    }

    #[test]
    fn node_order_is_first_appearance() {
        let mut n = Netlist::new();
        n.source("V", "z", "0", Waveform::Dc(1.0))
            .resistor("R1", "z", "a", 1.0)
            .resistor("R2", "a", "m", 1.0)
            .resistor("R3", "m", "0", 1.0);
        let sys = assemble(&n).unwrap();
        assert_eq!(sys.node_names(), &["z", "a", "m"]);
    }

    #[test]
    fn floating_node_is_rejected() {
        let mut n = Netlist::new();
        n.source("V", "a", "0", Waveform::Dc(1.0))
            .resistor("R1", "a", "0", 1.0)
            .resistor("R2", "a", "dangling", 1.0);
        assert!(matches!(assemble(&n), Err(CircuitError::DisconnectedNode(_))));
    }

    #[test]
    fn ideal_diodes_in_parallel_settle_on_one_conducting() {
        let mut n = Netlist::new();
        n.source("V", "a", "0", Waveform::Dc(1.0))
            .diode("D1", "a", "b", DiodeModel::ideal())
            .diode("D2", "a", "b", DiodeModel::ideal())
            .resistor("R", "b", "0", 1.0);
        let cfg = crate::circuit::TransientConfig {
            dt: 1e-6,
            t_end: 1e-5,
            ..Default::default()
        };
        let trace = crate::circuit::transient_solve(&n, &cfg).unwrap();
        assert!((trace.node("b").unwrap()[3] - 1.0).abs() < 1e-9);
    }
}
