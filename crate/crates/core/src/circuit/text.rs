//! Line-oriented netlist text format.
//!
//! ```text
//! * comment
//! R name n1 n2 ohms
//! C name n1 n2 farads iv=volts
//! D name anode cathode ideal | ideal(gshunt=1e-12) | shockley(is=2.52e-9,n=1.752,vt=0.025852)
//! V name n+ n- dc 5 | step 0 5 1e-3 | pwl 0 0 1e-3 5
//! PROBE label element
//! ```

use std::fmt::Write as _;

use super::netlist::{DiodeModel, ElementKind, Netlist, Waveform};
use super::CircuitError;

fn perr(line: usize, msg: impl Into<String>) -> CircuitError {
    CircuitError::Parse {
        line,
        msg: msg.into(),
    }
}

fn num(line: usize, tok: &str) -> Result<f64, CircuitError> {
    tok.parse::<f64>()
        .map_err(|_| perr(line, format!("expected a number, found `{tok}`")))
}

fn parse_diode_model(line: usize, tok: &str) -> Result<DiodeModel, CircuitError> {
    let lower = tok.to_ascii_lowercase();
    let (head, args) = match lower.find('(') {
        Some(i) if lower.ends_with(')') => (&lower[..i], &lower[i + 1..lower.len() - 1]),
        Some(_) => return Err(perr(line, format!("unbalanced parentheses in `{tok}`"))),
        None => (lower.as_str(), ""),
    };
    let mut kv = Vec::new();
    for part in args.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| perr(line, format!("expected key=value, found `{part}`")))?;
        kv.push((k.trim().to_string(), num(line, v.trim())?));
    }
    let get = |key: &str| kv.iter().find(|(k, _)| k == key).map(|(_, v)| *v);
    match head {
        "ideal" => Ok(DiodeModel::IdealSwitch {
            shunt_conductance: get("gshunt").unwrap_or(DiodeModel::DEFAULT_SHUNT),
        }),
        "shockley" => {
            let DiodeModel::Shockley {
                saturation_current,
                emission_coefficient,
                thermal_voltage,
            } = DiodeModel::n4148()
            else {
                unreachable!()
            };
            Ok(DiodeModel::Shockley {
                saturation_current: get("is").unwrap_or(saturation_current),
                emission_coefficient: get("n").unwrap_or(emission_coefficient),
                thermal_voltage: get("vt").unwrap_or(thermal_voltage),
            })
        }
        other => Err(perr(line, format!("unknown diode model `{other}`"))),
    }
}

fn parse_waveform(line: usize, toks: &[&str]) -> Result<Waveform, CircuitError> {
    let Some((kind, rest)) = toks.split_first() else {
        return Err(perr(line, "missing waveform"));
    };
    let vals = rest
        .iter()
        .map(|t| num(line, t))
        .collect::<Result<Vec<_>, _>>()?;
    match (kind.to_ascii_lowercase().as_str(), vals.as_slice()) {
        ("dc", [v]) => Ok(Waveform::Dc(*v)),
        ("step", [before, after, at]) => Ok(Waveform::Step {
            before: *before,
            after: *after,
            at: *at,
        }),
        ("pwl", v) if !v.is_empty() && v.len() % 2 == 0 => {
            Ok(Waveform::Pwl(v.chunks(2).map(|c| (c[0], c[1])).collect()))
        }
        (k, _) => Err(perr(line, format!("malformed `{k}` waveform"))),
    }
}

/// Parses the text format. The result is not validated; call
/// [`Netlist::validate`] or assemble it.
pub fn parse_netlist(src: &str) -> Result<Netlist, CircuitError> {
    let mut net = Netlist::new();
    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        let body = raw.split(['#', ';']).next().unwrap_or("").trim();
        if body.is_empty() || body.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        let kw = toks[0].to_ascii_uppercase();
        match kw.as_str() {
            "R" => {
                let [_, name, a, b, ohms] = toks[..] else {
                    return Err(perr(line, "expected `R name n1 n2 ohms`"));
                };
                net.resistor(name, a, b, num(line, ohms)?);
            }
            "C" => {
                let (name, a, b, farads, iv) = match toks[..] {
                    [_, name, a, b, f] => (name, a, b, f, None),
                    [_, name, a, b, f, iv] => (name, a, b, f, Some(iv)),
                    _ => return Err(perr(line, "expected `C name n1 n2 farads iv=volts`")),
                };
                let initial = match iv {
                    None => 0.0,
                    Some(tok) => {
                        let v = tok
                            .strip_prefix("iv=")
                            .ok_or_else(|| perr(line, format!("expected iv=volts, found `{tok}`")))?;
                        num(line, v)?
                    }
                };
                net.capacitor(name, a, b, num(line, farads)?, initial);
            }
            "D" => {
                let [_, name, a, k, model] = toks[..] else {
                    return Err(perr(line, "expected `D name anode cathode model`"));
                };
                net.diode(name, a, k, parse_diode_model(line, model)?);
            }
            "V" => {
                if toks.len() < 5 {
                    return Err(perr(line, "expected `V name n+ n- waveform`"));
                }
                let wf = parse_waveform(line, &toks[4..])?;
                net.source(toks[1], toks[2], toks[3], wf);
            }
            "PROBE" => {
                let [_, label, element] = toks[..] else {
                    return Err(perr(line, "expected `PROBE label element`"));
                };
                net.probe(label, element);
            }
            other => return Err(perr(line, format!("unknown statement `{other}`"))),
        }
    }
    Ok(net)
}

fn format_model(m: &DiodeModel) -> String {
    match *m {
        DiodeModel::IdealSwitch { shunt_conductance } => {
            if shunt_conductance == DiodeModel::DEFAULT_SHUNT {
                "ideal".to_string()
            } else {
                format!("ideal(gshunt={shunt_conductance:?})")
            }
        }
        DiodeModel::Shockley {
            saturation_current,
            emission_coefficient,
            thermal_voltage,
        } => format!(
            "shockley(is={saturation_current:?},n={emission_coefficient:?},vt={thermal_voltage:?})"
        ),
    }
}

fn format_waveform(w: &Waveform) -> String {
    match w {
        Waveform::Dc(v) => format!("dc {v:?}"),
        Waveform::Step { before, after, at } => format!("step {before:?} {after:?} {at:?}"),
        Waveform::Pwl(points) => {
            let mut s = "pwl".to_string();
            for (t, v) in points {
                let _ = write!(s, " {t:?} {v:?}");
            }
            s
        }
    }
}

/// Renders the text format; `parse_netlist(format_netlist(n)) == n`.
pub fn format_netlist(net: &Netlist) -> String {
    let mut out = String::new();
    for e in net.elements() {
        let [a, b] = &e.nodes;
        let _ = match &e.kind {
            ElementKind::Resistor { ohms } => writeln!(out, "R {} {a} {b} {ohms:?}", e.name),
            ElementKind::Capacitor {
                farads,
                initial_voltage,
            } => writeln!(out, "C {} {a} {b} {farads:?} iv={initial_voltage:?}", e.name),
            ElementKind::Diode(m) => writeln!(out, "D {} {a} {b} {}", e.name, format_model(m)),
            ElementKind::VoltageSource(w) => {
                writeln!(out, "V {} {a} {b} {}", e.name, format_waveform(w))
            }
        };
    }
    for p in net.probes() {
        let _ = writeln!(out, "PROBE {} {}", p.label, p.element);
    }
    out
}
