//! An RC low-pass written in the netlist text format, solved with both
//! integrators and compared with `V(1 - e^(-t/RC))`.

use capnet::circuit::{kcl_residual, parse_netlist, transient_solve, Integrator, TransientConfig};

const NETLIST: &str = "\
* 1 kOhm into 1 uF, 5 V step at t = 0
V V1 in 0 step 0 5 0
R R1 in out 1000
C C1 out 0 1e-6 iv=0
PROBE i R1
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = parse_netlist(NETLIST)?;
    let tau = 1e-3;
    for integrator in [Integrator::BackwardEuler, Integrator::Trapezoidal] {
        let cfg = TransientConfig { dt: 1e-5, t_end: 5.0 * tau, integrator, ..Default::default() };
        let trace = transient_solve(&net, &cfg)?;
        let out = trace.node("out").ok_or("no node `out`")?;
        let worst = trace
            .times
            .iter()
            .zip(out)
            .map(|(t, v)| (v - 5.0 * (1.0 - (-t / tau).exp())).abs())
            .fold(0.0, f64::max);
        println!(
            "{integrator:?}: {} steps, max error {worst:.2e} V, KCL residual {:.2e} A",
            trace.len() - 1,
            kcl_residual(&trace, &net)?
        );
    }
    Ok(())
}
