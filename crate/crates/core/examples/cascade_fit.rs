//! Two weight cells in series versus the best single cell.
//!
//! Runs the cascade under a 5 V step with ideal diodes, 1N4148 diodes and
//! plain wires, and prints the normalized RMS distance to the best-fitting
//! single cell for each.

use capnet::cells::{build_cascade, single_layer_fit_residual, CellParams, FitSearch};
use capnet::circuit::{transient_solve, DiodeModel, TransientConfig, Waveform};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stimulus = Waveform::Step { before: 0.0, after: 5.0, at: 0.0 };
    let cfg = TransientConfig { dt: 1e-6, t_end: 50e-3, ..Default::default() };
    let variants: [(&str, Option<DiodeModel>); 3] = [
        ("ideal diodes", Some(DiodeModel::ideal())),
        ("1N4148", Some(DiodeModel::n4148())),
        ("wires", None),
    ];
    for (label, diode) in variants {
        let cell = CellParams::module1().with_diode(diode);
        let net = build_cascade(&cell, &cell, diode.as_ref(), stimulus.clone())?;
        let trace = transient_solve(&net, &cfg)?;
        let search = FitSearch { diode: diode.is_some(), ..Default::default() };
        let fit = single_layer_fit_residual(&trace, "in", "out", &search)?;
        let p = &fit.params;
        println!(
            "{label:>12}: rms {:.3e}  (R1 {:.1} R2 {:.2} R3 {:.1} C1 {:.3e}, {} evaluations)",
            fit.rms, p.r1, p.r2, p.r3, p.c1, fit.evaluations
        );
    }
    Ok(())
}
