//! Transient simulation of resistor / capacitor / diode / source netlists.

mod mna;
mod netlist;
mod text;
mod trace;
mod transient;

use thiserror::Error;

pub use mna::{assemble, MnaSystem};
pub use netlist::{DiodeModel, Element, ElementKind, Netlist, Probe, Waveform, GROUND};
pub use text::{format_netlist, parse_netlist};
pub use trace::{kcl_residual, Trace};
pub use transient::{transient_solve, Integrator, Simulator, SolverStats, TransientConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("node `{0}` is not connected to the rest of the circuit")]
    DisconnectedNode(String),
    #[error("netlist has no ground node")]
    NoGround,
    #[error("singular topology: {0}")]
    SingularTopology(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("invalid value for `{element}`: {reason}")]
    InvalidValue { element: String, reason: String },
    #[error("invalid transient configuration: {0}")]
    InvalidConfig(String),
    #[error("Newton iteration did not converge at t = {time:e} s (residual {residual:e} A)")]
    NewtonDivergence { time: f64, residual: f64 },
    #[error("diode conduction states did not settle at t = {time:e} s")]
    SwitchingDidNotSettle { time: f64 },
    #[error("non-finite state at t = {0:e} s")]
    NonFiniteState(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("netlist line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
