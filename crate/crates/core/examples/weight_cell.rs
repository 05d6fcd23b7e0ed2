//! One weight cell under a 5 V step: the capacitor-branch current against
//! its closed form, and what the capacitor keeps once the input drops.

use capnet::cells::{build_module1, capacitor_name, eq3_residual, probe_cell, CellParams};
use capnet::circuit::{transient_solve, Netlist, TransientConfig, Waveform};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = CellParams::module1();
    let (a, b) = p.eq3_coefficients();
    println!("R1 {} R2 {} R3 {} C1 {:e}: a = {a} ohm, b = {b:.3e} 1/s", p.r1, p.r2, p.r3, p.c1);

    // charge for 2 ms, then pull the input back to 0 V
    let mut net = Netlist::new();
    net.source("V", "in", "0", Waveform::Pwl(vec![(0.0, 5.0), (2e-3, 5.0), (2e-3 + 1e-9, 0.0)]));
    net.extend(build_module1("X", &p, "in", "0")?);
    probe_cell(&mut net, "X");
    let trace = transient_solve(&net, &TransientConfig { dt: 1e-6, t_end: 6e-3, ..Default::default() })?;
    let r = eq3_residual(&trace, &p, "X.I1", "in", "0", Some((0.0, 2e-3)))?;
    println!("charging window residual {r:.2e}");

    let vc = trace.node("X.c").ok_or("no capacitor node")?;
    for t in [0.0, 0.5e-3, 1e-3, 2e-3, 4e-3, 6e-3] {
        let k = trace.times.iter().position(|x| *x >= t - 1e-12).unwrap_or(trace.len() - 1);
        println!("t = {:>4.1} ms  V({}) = {:.4} V", t * 1e3, capacitor_name("X"), vc[k]);
    }
    Ok(())
}
