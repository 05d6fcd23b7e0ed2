//! The 25-input classifier for one digit pattern: the sensed output with
//! ideal diodes and with every diode replaced by a wire, pattern by pattern.

use capnet::cells::{compose_classifier, pin_source, NetworkTopology, SENSE_PROBE};
use capnet::circuit::ElementKind;
use capnet::circuit::{transient_solve, TransientConfig, Waveform};

fn response(topo: &NetworkTopology, active: &[usize]) -> Result<f64, Box<dyn std::error::Error>> {
    let mut net = compose_classifier(topo)?;
    for k in active {
        if let Some(e) = net.element_mut(&pin_source(*k)) {
            e.kind = ElementKind::VoltageSource(Waveform::Dc(5.0));
        }
    }
    let trace = transient_solve(&net, &TransientConfig { dt: 1e-6, t_end: 200e-6, ..Default::default() })?;
    Ok(*trace.probe(SENSE_PROBE).and_then(|p| p.last()).ok_or("no sense probe")?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let topo = NetworkTopology::default();
    let net = compose_classifier(&topo)?;
    println!("{} passive elements, {} nodes", net.passive_count(), net.nodes().len());
    let (a, b) = (vec![6], vec![18]);
    let both = vec![6, 18];
    for (name, t) in [("diodes", topo.clone()), ("wires", topo.linearized())] {
        let (ra, rb, rab) = (response(&t, &a)?, response(&t, &b)?, response(&t, &both)?);
        println!(
            "{name:>7}: pin 6 {:.3} mA, pin 18 {:.3} mA, both {:.3} mA (sum of singles {:.3} mA)",
            ra * 1e3,
            rb * 1e3,
            rab * 1e3,
            (ra + rb) * 1e3
        );
    }
    Ok(())
}
