//! Netlist data model: nodes, elements and current probes.

use std::collections::{HashMap, HashSet};
use std::fmt;

use super::CircuitError;

/// Name of the reference node. `gnd` and `GND` are accepted as aliases.
pub const GROUND: &str = "0";

pub(crate) fn canonical_node(name: &str) -> String {
    match name {
        "gnd" | "GND" | "0" => GROUND.to_string(),
        other => other.to_string(),
    }
}

/// Diode constitutive model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiodeModel {
    /// Zero forward drop when conducting, open (plus a tiny shunt) when blocking.
    IdealSwitch { shunt_conductance: f64 },
    /// `I = Is * (exp(V / (n * Vt)) - 1)`.
    Shockley {
        saturation_current: f64,
        emission_coefficient: f64,
        thermal_voltage: f64,
    },
}

impl DiodeModel {
    pub const DEFAULT_SHUNT: f64 = 1e-12;

    pub fn ideal() -> Self {
        DiodeModel::IdealSwitch {
            shunt_conductance: Self::DEFAULT_SHUNT,
        }
    }

    /// Small-signal 1N4148 parameters (Is = 2.52 nA, n = 1.752, Vt = 25.85 mV).
    pub fn n4148() -> Self {
        DiodeModel::Shockley {
            saturation_current: 2.52e-9,
            emission_coefficient: 1.752,
            thermal_voltage: 0.025852,
        }
    }

    pub fn is_ideal(&self) -> bool {
        matches!(self, DiodeModel::IdealSwitch { .. })
    }

    pub(crate) fn validate(&self, element: &str) -> Result<(), CircuitError> {
        let ok = match *self {
            DiodeModel::IdealSwitch { shunt_conductance } => {
                shunt_conductance.is_finite() && shunt_conductance >= 0.0
            }
            DiodeModel::Shockley {
                saturation_current,
                emission_coefficient,
                thermal_voltage,
            } => [saturation_current, emission_coefficient, thermal_voltage]
                .iter()
                .all(|v| v.is_finite() && *v > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(CircuitError::InvalidValue {
                element: element.to_string(),
                reason: format!("invalid diode model {self:?}"),
            })
        }
    }
}

impl Default for DiodeModel {
    fn default() -> Self {
        DiodeModel::ideal()
    }
}

/// Source voltage as a function of time.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    Dc(f64),
    /// `before` for `t < at`, `after` from `at` on.
    Step { before: f64, after: f64, at: f64 },
    /// Piecewise-linear through `(t, v)` points, held constant outside.
    Pwl(Vec<(f64, f64)>),
}

impl Waveform {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Waveform::Dc(v) => *v,
            Waveform::Step { before, after, at } => {
                if t >= *at {
                    *after
                } else {
                    *before
                }
            }
            Waveform::Pwl(points) => {
                let Some(&(t0, v0)) = points.first() else {
                    return 0.0;
                };
                if t <= t0 {
                    return v0;
                }
                for w in points.windows(2) {
                    let (ta, va) = w[0];
                    let (tb, vb) = w[1];
                    if t <= tb {
                        if tb == ta {
                            return vb;
                        }
                        return va + (vb - va) * (t - ta) / (tb - ta);
                    }
                }
                points.last().map(|p| p.1).unwrap_or(0.0)
            }
        }
    }

    /// `a * self + b * other`, used for superposition checks. Both must be
    /// evaluated on the same time points, so the result is a PWL over the
    /// given grid.
    pub fn combine(a: f64, lhs: &Waveform, b: f64, rhs: &Waveform, grid: &[f64]) -> Waveform {
        Waveform::Pwl(
            grid.iter()
                .map(|&t| (t, a * lhs.value(t) + b * rhs.value(t)))
                .collect(),
        )
    }

    fn validate(&self, element: &str) -> Result<(), CircuitError> {
        let bad = |reason: &str| CircuitError::InvalidValue {
            element: element.to_string(),
            reason: reason.to_string(),
        };
        match self {
            Waveform::Dc(v) if !v.is_finite() => Err(bad("non-finite DC value")),
            Waveform::Step { before, after, at }
                if !(before.is_finite() && after.is_finite() && at.is_finite()) =>
            {
                Err(bad("non-finite step parameter"))
            }
            Waveform::Pwl(points) => {
                if points.is_empty() {
                    return Err(bad("empty PWL"));
                }
                if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                    return Err(bad("non-finite PWL point"));
                }
                if points.windows(2).any(|w| w[1].0 < w[0].0) {
                    return Err(bad("PWL times must be nondecreasing"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Resistor { ohms: f64 },
    Capacitor { farads: f64, initial_voltage: f64 },
    Diode(DiodeModel),
    VoltageSource(Waveform),
}

/// A two-terminal element. Current is reported flowing from `nodes[0]` to
/// `nodes[1]` through the element (anode to cathode for diodes, `+` to `-`
/// for sources).
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub nodes: [String; 2],
    pub kind: ElementKind,
}

impl Element {
    pub fn is_passive(&self) -> bool {
        !matches!(self.kind, ElementKind::VoltageSource(_))
    }
}

/// Named current probe attached to an element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub label: String,
    pub element: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Netlist {
    elements: Vec<Element>,
    probes: Vec<Probe>,
}

impl Netlist {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn element_index(&self, name: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.name == name)
    }

    pub fn push(&mut self, name: &str, a: &str, b: &str, kind: ElementKind) -> &mut Self {
        self.elements.push(Element {
            name: name.to_string(),
            nodes: [canonical_node(a), canonical_node(b)],
            kind,
        });
        self
    }

    pub fn resistor(&mut self, name: &str, a: &str, b: &str, ohms: f64) -> &mut Self {
        self.push(name, a, b, ElementKind::Resistor { ohms })
    }

    pub fn capacitor(
        &mut self,
        name: &str,
        a: &str,
        b: &str,
        farads: f64,
        initial_voltage: f64,
    ) -> &mut Self {
        self.push(
            name,
            a,
            b,
            ElementKind::Capacitor {
                farads,
                initial_voltage,
            },
        )
    }

    pub fn diode(&mut self, name: &str, anode: &str, cathode: &str, model: DiodeModel) -> &mut Self {
        self.push(name, anode, cathode, ElementKind::Diode(model))
    }

    pub fn source(&mut self, name: &str, pos: &str, neg: &str, waveform: Waveform) -> &mut Self {
        self.push(name, pos, neg, ElementKind::VoltageSource(waveform))
    }

    pub fn probe(&mut self, label: &str, element: &str) -> &mut Self {
        self.probes.push(Probe {
            label: label.to_string(),
            element: element.to_string(),
        });
        self
    }

    /// Appends every element and probe of `other`.
    pub fn extend(&mut self, other: Netlist) -> &mut Self {
        self.elements.extend(other.elements);
        self.probes.extend(other.probes);
        self
    }

    pub fn element_mut(&mut self, name: &str) -> Option<&mut Element> {
        self.elements.iter_mut().find(|e| e.name == name)
    }

    pub fn remove_element(&mut self, name: &str) -> Option<Element> {
        let idx = self.element_index(name)?;
        self.probes.retain(|p| p.element != name);
        Some(self.elements.remove(idx))
    }

    /// Non-ground nodes in order of first appearance.
    pub fn nodes(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for e in &self.elements {
            for n in &e.nodes {
                if n != GROUND && seen.insert(n.clone()) {
                    out.push(n.clone());
                }
            }
        }
        out
    }

    pub fn passive_count(&self) -> usize {
        self.elements.iter().filter(|e| e.is_passive()).count()
    }

    pub fn count_where(&self, pred: impl Fn(&ElementKind) -> bool) -> usize {
        self.elements.iter().filter(|e| pred(&e.kind)).count()
    }

    /// Checks labels, values and connectivity.
    pub fn validate(&self) -> Result<(), CircuitError> {
        let mut labels = HashSet::new();
        for e in &self.elements {
            if !labels.insert(e.name.as_str()) {
                return Err(CircuitError::DuplicateLabel(e.name.clone()));
            }
            let bad = |reason: &str| CircuitError::InvalidValue {
                element: e.name.clone(),
                reason: reason.to_string(),
            };
            match &e.kind {
                ElementKind::Resistor { ohms } => {
                    if !(ohms.is_finite() && *ohms > 0.0) {
                        return Err(bad("resistance must be positive"));
                    }
                }
                ElementKind::Capacitor {
                    farads,
                    initial_voltage,
                } => {
                    if !(farads.is_finite() && *farads > 0.0) {
                        return Err(bad("capacitance must be positive"));
                    }
                    if !initial_voltage.is_finite() {
                        return Err(bad("non-finite initial voltage"));
                    }
                }
                ElementKind::Diode(model) => model.validate(&e.name)?,
                ElementKind::VoltageSource(w) => w.validate(&e.name)?,
            }
            if e.nodes[0] == e.nodes[1] {
                return Err(bad("both terminals on the same node"));
            }
        }
        let mut probe_labels = HashSet::new();
        for p in &self.probes {
            if !probe_labels.insert(p.label.as_str()) {
                return Err(CircuitError::DuplicateLabel(p.label.clone()));
            }
            if !labels.contains(p.element.as_str()) {
                return Err(CircuitError::UnknownElement(p.element.clone()));
            }
        }
        self.check_connectivity()
    }

    fn check_connectivity(&self) -> Result<(), CircuitError> {
        let mut degree: HashMap<&str, usize> = HashMap::new();
        for e in &self.elements {
            for n in &e.nodes {
                *degree.entry(n.as_str()).or_default() += 1;
            }
        }
        if !degree.contains_key(GROUND) {
            return Err(CircuitError::NoGround);
        }
        for n in self.nodes() {
            if degree.get(n.as_str()).copied().unwrap_or(0) < 2 {
                return Err(CircuitError::DisconnectedNode(n));
            }
        }
        // every node must reach ground through some element
        let mut uf = UnionFind::default();
        for e in &self.elements {
            uf.union(&e.nodes[0], &e.nodes[1]);
        }
        for n in self.nodes() {
            if !uf.same(&n, GROUND) {
                return Err(CircuitError::DisconnectedNode(n));
            }
        }
        // loops made only of voltage sources over-determine node voltages
        let mut sources = UnionFind::default();
        for e in &self.elements {
            if let ElementKind::VoltageSource(_) = e.kind {
                if sources.same(&e.nodes[0], &e.nodes[1]) {
                    return Err(CircuitError::SingularTopology(format!(
                        "voltage source `{}` closes a loop of voltage sources",
                        e.name
                    )));
                }
                sources.union(&e.nodes[0], &e.nodes[1]);
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct UnionFind {
    parent: HashMap<String, String>,
}

impl UnionFind {
    fn find(&mut self, x: &str) -> String {
        let mut cur = x.to_string();
        loop {
            let p = self.parent.get(&cur).cloned().unwrap_or_else(|| cur.clone());
            if p == cur {
                return cur;
            }
            cur = p;
        }
    }

    fn union(&mut self, a: &str, b: &str) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent.insert(ra, rb);
        }
    }

    fn same(&mut self, a: &str, b: &str) -> bool {
        self.find(a) == self.find(b)
    }
}

impl fmt::Display for Netlist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::text::format_netlist(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_aliases_are_canonical() {
        let mut n = Netlist::new();
        n.resistor("R1", "a", "gnd", 1.0).resistor("R2", "a", "GND", 1.0);
        assert!(n.elements().iter().all(|e| e.nodes[1] == GROUND));
        assert_eq!(n.nodes(), vec!["a".to_string()]);
    }

    #[test]
    fn rejects_duplicate_labels_and_bad_values() {
        let mut n = Netlist::new();
        n.resistor("R1", "a", "0", 1.0).resistor("R1", "a", "0", 2.0);
        assert!(matches!(n.validate(), Err(CircuitError::DuplicateLabel(_))));

        let mut n = Netlist::new();
        n.resistor("R1", "a", "0", 0.0).resistor("R2", "a", "0", 1.0);
        assert!(matches!(n.validate(), Err(CircuitError::InvalidValue { .. })));

        let mut n = Netlist::new();
        n.capacitor("C1", "a", "0", -1e-6, 0.0).resistor("R2", "a", "0", 1.0);
        assert!(matches!(n.validate(), Err(CircuitError::InvalidValue { .. })));
    }

    #[test]
    fn floating_and_groundless_netlists() {
        let mut n = Netlist::new();
        n.source("V1", "a", "0", Waveform::Dc(1.0))
            .resistor("R1", "a", "0", 1.0)
            .resistor("R2", "a", "float", 1.0);
        assert!(matches!(n.validate(), Err(CircuitError::DisconnectedNode(ref x)) if x == "float"));

        let mut n = Netlist::new();
        n.resistor("R1", "a", "b", 1.0).resistor("R2", "a", "b", 1.0);
        assert!(matches!(n.validate(), Err(CircuitError::NoGround)));

        // island not connected to ground
        let mut n = Netlist::new();
        n.resistor("R0", "g", "0", 1.0)
            .resistor("R00", "g", "0", 1.0)
            .resistor("R1", "a", "b", 1.0)
            .resistor("R2", "a", "b", 1.0);
        assert!(matches!(n.validate(), Err(CircuitError::DisconnectedNode(_))));
    }

    #[test]
    fn source_loop_is_singular() {
        let mut n = Netlist::new();
        n.source("V1", "a", "0", Waveform::Dc(1.0))
            .source("V2", "a", "0", Waveform::Dc(2.0));
        assert!(matches!(n.validate(), Err(CircuitError::SingularTopology(_))));
    }

    #[test]
    fn waveforms() {
        let s = Waveform::Step {
            before: 0.0,
            after: 5.0,
            at: 1e-3,
        };
        assert_eq!(s.value(0.0), 0.0);
        assert_eq!(s.value(1e-3), 5.0);
        let p = Waveform::Pwl(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 2.0)]);
        assert_eq!(p.value(-1.0), 0.0);
        assert_eq!(p.value(0.5), 1.0);
        assert_eq!(p.value(5.0), 2.0);
    }
}
