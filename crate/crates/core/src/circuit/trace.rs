//! Time-sampled simulation output.

use std::fmt::Write as _;

use super::mna::MnaSystem;
use super::netlist::{ElementKind, Netlist, GROUND};
use super::transient::{Integrator, Simulator};
use super::CircuitError;

/// Node voltages, element currents and probe currents on a common time grid.
/// Series are stored per signal: `node_voltages[node][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub node_names: Vec<String>,
    pub node_voltages: Vec<Vec<f64>>,
    pub element_names: Vec<String>,
    pub element_currents: Vec<Vec<f64>>,
    pub probe_labels: Vec<String>,
    pub probe_currents: Vec<Vec<f64>>,
    pub integrator: Integrator,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn node(&self, name: &str) -> Option<&[f64]> {
        self.node_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.node_voltages[i].as_slice())
    }

    /// Voltage series of `name`, zeros for ground.
    pub fn node_or_ground(&self, name: &str) -> Option<Vec<f64>> {
        if name == GROUND {
            return Some(vec![0.0; self.len()]);
        }
        self.node(name).map(<[f64]>::to_vec)
    }

    pub fn probe(&self, label: &str) -> Option<&[f64]> {
        self.probe_labels
            .iter()
            .position(|n| n == label)
            .map(|i| self.probe_currents[i].as_slice())
    }

    pub fn element_current(&self, name: &str) -> Option<&[f64]> {
        self.element_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.element_currents[i].as_slice())
    }

    /// Checks the structural invariants: increasing times, equal lengths,
    /// finite values.
    pub fn check(&self) -> Result<(), CircuitError> {
        let n = self.times.len();
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CircuitError::ShapeMismatch("times not strictly increasing".into()));
        }
        let all = self
            .node_voltages
            .iter()
            .chain(&self.element_currents)
            .chain(&self.probe_currents);
        for s in all {
            if s.len() != n {
                return Err(CircuitError::ShapeMismatch("series length differs from times".into()));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(CircuitError::ShapeMismatch("non-finite sample".into()));
            }
        }
        Ok(())
    }

    /// CSV with header `t,<node...>,<probe...>`. Values use the shortest
    /// representation that round-trips to the same `f64`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for n in self.node_names.iter().chain(&self.probe_labels) {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t:?}");
            for s in self.node_voltages.iter().chain(&self.probe_currents) {
                let _ = write!(out, ",{:?}", s[k]);
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) struct TraceRecorder {
    trace: Trace,
    probe_elems: Vec<usize>,
}

impl TraceRecorder {
    pub fn new(sys: &MnaSystem, capacity: usize) -> Self {
        let series = |n: usize| (0..n).map(|_| Vec::with_capacity(capacity)).collect::<Vec<_>>();
        let element_names = sys.element_names();
        Self {
            trace: Trace {
                times: Vec::with_capacity(capacity),
                node_names: sys.node_names().to_vec(),
                node_voltages: series(sys.node_count()),
                element_currents: series(element_names.len()),
                element_names,
                probe_labels: sys.probes().iter().map(|(l, _)| l.clone()).collect(),
                probe_currents: series(sys.probes().len()),
                integrator: Integrator::default(),
            },
            probe_elems: sys.probes().iter().map(|(_, e)| *e).collect(),
        }
    }

    pub fn record(&mut self, sim: &Simulator<'_>) {
        let t = &mut self.trace;
        t.times.push(sim.time());
        for (s, v) in t.node_voltages.iter_mut().zip(sim.node_voltages()) {
            s.push(*v);
        }
        for (el, s) in t.element_currents.iter_mut().enumerate() {
            s.push(sim.element_current(el));
        }
        for (s, el) in t.probe_currents.iter_mut().zip(&self.probe_elems) {
            s.push(sim.element_current(*el));
        }
    }

    pub fn finish(mut self, integrator: Integrator) -> Trace {
        self.trace.integrator = integrator;
        self.trace
    }
}

/// Largest net current imbalance over all nodes and samples. Resistor
/// currents are recomputed from the node voltages by Ohm's law; the other
/// elements use the currents stored in the trace.
pub fn kcl_residual(trace: &Trace, netlist: &Netlist) -> Result<f64, CircuitError> {
    trace.check()?;
    let nodes = netlist.nodes();
    let node_pos = |name: &str| -> Result<Option<usize>, CircuitError> {
        if name == GROUND {
            return Ok(None);
        }
        trace
            .node_names
            .iter()
            .position(|n| n == name)
            .map(Some)
            .ok_or_else(|| CircuitError::ShapeMismatch(format!("trace lacks node `{name}`")))
    };
    if nodes.len() != trace.node_names.len() {
        return Err(CircuitError::ShapeMismatch(format!(
            "netlist has {} nodes, trace has {}",
            nodes.len(),
            trace.node_names.len()
        )));
    }
    let mut imbalance = vec![vec![0.0; trace.len()]; trace.node_names.len()];
    for e in netlist.elements() {
        let a = node_pos(&e.nodes[0])?;
        let b = node_pos(&e.nodes[1])?;
        let current: Vec<f64> = match &e.kind {
            ElementKind::Resistor { ohms } => {
                let va = trace.node_or_ground(&e.nodes[0]).unwrap_or_default();
                let vb = trace.node_or_ground(&e.nodes[1]).unwrap_or_default();
                va.iter().zip(&vb).map(|(x, y)| (x - y) / ohms).collect()
            }
            _ => trace
                .element_current(&e.name)
                .ok_or_else(|| CircuitError::ShapeMismatch(format!("trace lacks current of `{}`", e.name)))?
                .to_vec(),
        };
        for (k, i) in current.iter().enumerate() {
            if let Some(a) = a {
                imbalance[a][k] += i;
            }
            if let Some(b) = b {
                imbalance[b][k] -= i;
            }
        }
    }
    Ok(imbalance
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs())))
}
