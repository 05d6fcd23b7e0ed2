//! Comparison table, SVG charts and the resistive energy estimate.
//!
//! All output is plain text with fixed number formatting, so identical
//! inputs give byte-identical files.

use std::fmt::Write as _;

use crate::circuit::Trace;
use crate::learning::{argmax, rank_of, ResultMatrix, CLASSES};
use crate::mcu::{format_duration, RuntimeBreakdown};

/// One column of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub top1: f64,
    pub top3: Option<f64>,
    /// Operation time, seconds.
    pub seconds: f64,
}

/// Durations under a minute are written compactly (`14s`), longer ones as
/// [`format_duration`] does.
pub fn table_duration(seconds: f64) -> String {
    if seconds.round() < 60.0 {
        format!("{}s", seconds.round() as u64)
    } else {
        format_duration(seconds)
    }
}

/// At most three decimals, trailing zeros dropped.
pub fn short_number(x: f64) -> String {
    let s = format!("{:.3}", x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    match s {
        "-0" | "" => "0".to_string(),
        _ => s.to_string(),
    }
}

fn signed(x: f64) -> String {
    let s = short_number(x);
    if s == "0" || s.starts_with('-') {
        s
    } else {
        format!("+{s}")
    }
}

/// `top1(top3)`, or just `top1` when top-3 is unknown.
pub fn accuracy_cell(r: &RunSummary) -> String {
    match r.top3 {
        Some(t3) => format!("{}({})", short_number(r.top1), short_number(t3)),
        None => short_number(r.top1),
    }
}

/// Markdown comparison of the software baseline and the analog run, with
/// the analog timing breakdown when given. `analog_joules` is an energy
/// estimate for the analog run; without one, power is `not-measured`.
pub fn compare_report(
    analog: &RunSummary,
    baseline: Option<&RunSummary>,
    breakdown: Option<&RuntimeBreakdown>,
    analog_joules: Option<f64>,
) -> String {
    let mut s = String::from("# Result comparison\n\n");
    let power = analog_joules.map_or("not-measured".to_string(), |j| format!("{j:.3e} J (model)"));
    match baseline {
        Some(b) => {
            s.push_str("| | Software baseline | Analog circuits |\n|---|---|---|\n");
            let _ = writeln!(
                s,
                "| Operation time | {} | {} |",
                table_duration(b.seconds),
                table_duration(analog.seconds)
            );
            let _ = writeln!(s, "| Accuracy top-1(top-3) | {} | {} |", accuracy_cell(b), accuracy_cell(analog));
            let _ = writeln!(s, "| Power | not-measured | {power} |");
            let _ = writeln!(
                s,
                "\nOperation time: {} vs {}",
                table_duration(b.seconds),
                table_duration(analog.seconds)
            );
            let _ = writeln!(s, "Accuracy: {} vs {}", accuracy_cell(b), accuracy_cell(analog));
            let top3 = match (analog.top3, b.top3) {
                (Some(a), Some(b)) => signed(a - b),
                _ => "n/a".to_string(),
            };
            let _ = writeln!(
                s,
                "\nAnalog minus baseline: time {} s, top-1 {}, top-3 {}",
                signed(analog.seconds - b.seconds),
                signed(analog.top1 - b.top1),
                top3
            );
        }
        None => {
            s.push_str("| | Analog circuits |\n|---|---|\n");
            let _ = writeln!(s, "| Operation time | {} |", table_duration(analog.seconds));
            let _ = writeln!(s, "| Accuracy top-1(top-3) | {} |", accuracy_cell(analog));
            let _ = writeln!(s, "| Power | {power} |");
            s.push_str("\nNo baseline run available.\n");
        }
    }
    if let Some(bd) = breakdown {
        s.push_str("\n## Analog operation time by component\n\n| Component | Seconds | Share |\n|---|---|---|\n");
        let total = bd.total();
        for (name, v) in bd.components() {
            let share = if total > 0.0 { 100.0 * v / total } else { 0.0 };
            let _ = writeln!(s, "| {name} | {v:.6} | {share:.3}% |");
        }
        let _ = writeln!(s, "| total | {total:.6} | 100.000% |");
    }
    s
}

/// `∫ Σ I²R dt` over the trace, trapezoidal in time. Each entry names a
/// probe and the resistance it flows through.
pub fn resistive_energy(trace: &Trace, resistors: &[(&str, f64)]) -> Option<f64> {
    let mut e = 0.0;
    for (probe, ohms) in resistors {
        let i = trace.probe(probe)?;
        for k in 1..trace.times.len() {
            let dt = trace.times[k] - trace.times[k - 1];
            e += 0.5 * dt * ohms * (i[k] * i[k] + i[k - 1] * i[k - 1]);
        }
    }
    Some(e)
}

const GREEN: &str = "#7bc47f";
const APRICOT: &str = "#fbceb1";
const BLUE: &str = "#8db4e2";
const RED: &str = "#e06666";

/// Fill of every cell. Per row: the true-class cell is green on a top-1
/// match, apricot on a top-3 match and blue otherwise; when top-1 misses,
/// the row minimum is red.
pub fn matrix_colors(m: &ResultMatrix) -> [[Option<&'static str>; CLASSES]; CLASSES] {
    let mut out = [[None; CLASSES]; CLASSES];
    for (c, row) in m.values.iter().enumerate() {
        if m.rows_per_class[c] == 0 {
            continue;
        }
        let rank = rank_of(row, c);
        if rank == 0 {
            out[c][c] = Some(GREEN);
            continue;
        }
        out[c][c] = Some(if rank < 3 { APRICOT } else { BLUE });
        let neg: Vec<f64> = row.iter().map(|v| -v).collect();
        let low = argmax(&neg);
        if low != c {
            out[c][low] = Some(RED);
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Color-coded response matrix. Ampere values are shown in mA.
pub fn matrix_svg(m: &ResultMatrix) -> String {
    let (cell_w, cell_h, left, top) = (64.0, 28.0, 60.0, 60.0);
    let scale = if m.unit == "amperes" { 1e3 } else { 1.0 };
    let unit = if m.unit == "amperes" { "mA" } else { m.unit.as_str() };
    let w = left + cell_w * CLASSES as f64 + 20.0;
    let h = top + cell_h * CLASSES as f64 + 20.0;
    let colors = matrix_colors(m);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let _ = writeln!(
        s,
        "<text x=\"{left}\" y=\"20\" font-size=\"13\">Mean response ({}) by true class (rows) and circuit (columns)</text>",
        escape(unit)
    );
    for k in 0..CLASSES {
        let x = left + cell_w * (k as f64 + 0.5);
        let _ = writeln!(s, "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{k}</text>", top - 8.0);
        let y = top + cell_h * (k as f64 + 0.65);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{y}\" text-anchor=\"end\">{k}</text>", left - 8.0);
    }
    for (c, row) in m.values.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            let x = left + cell_w * k as f64;
            let y = top + cell_h * c as f64;
            let fill = colors[c][k].unwrap_or("#ffffff");
            let _ = writeln!(
                s,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell_w}\" height=\"{cell_h}\" fill=\"{fill}\" stroke=\"#999999\"/>"
            );
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.3}</text>",
                x + cell_w / 2.0,
                y + cell_h * 0.65,
                v * scale
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Horizontal bars on a log time axis: the analog components, the analog
/// total and, if known, the baseline time.
pub fn timing_svg(breakdown: &RuntimeBreakdown, baseline_seconds: Option<f64>) -> String {
    let mut bars: Vec<(String, f64)> = breakdown
        .components()
        .iter()
        .map(|(n, v)| (format!("analog {n}"), *v))
        .collect();
    bars.push(("analog total".into(), breakdown.total()));
    if let Some(b) = baseline_seconds {
        bars.push(("software baseline".into(), b));
    }
    let positive: Vec<f64> = bars.iter().map(|b| b.1).filter(|v| *v > 0.0).collect();
    let lo = positive.iter().cloned().fold(f64::INFINITY, f64::min).log10().floor();
    let hi = positive.iter().cloned().fold(f64::NEG_INFINITY, f64::max).log10().ceil();
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (-1.0, 1.0) };
    let (left, width, bar_h, top) = (150.0, 480.0, 24.0, 40.0);
    let h = top + bar_h * 1.5 * bars.len() as f64 + 40.0;
    let xpos = |v: f64| left + width * ((v.log10() - lo) / (hi - lo)).clamp(0.0, 1.0);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        left + width + 120.0
    );
    s.push_str("<text x=\"10\" y=\"20\" font-size=\"13\">Operation time by component (log scale)</text>\n");
    for (k, (name, v)) in bars.iter().enumerate() {
        let y = top + bar_h * 1.5 * k as f64;
        let end = if *v > 0.0 { xpos(*v) } else { left };
        let fill = if name.starts_with("software") { BLUE } else { APRICOT };
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", left - 6.0, y + bar_h * 0.65, escape(name));
        let _ = writeln!(
            s,
            "<rect x=\"{left}\" y=\"{y}\" width=\"{:.2}\" height=\"{bar_h}\" fill=\"{fill}\" stroke=\"#666666\"/>",
            end - left
        );
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{}\">{:.4e} s</text>", end + 6.0, y + bar_h * 0.65, v);
    }
    let axis_y = top + bar_h * 1.5 * bars.len() as f64 + 10.0;
    let mut d = lo;
    while d <= hi {
        let x = xpos(10f64.powf(d));
        let _ = writeln!(s, "<text x=\"{x:.2}\" y=\"{axis_y}\" text-anchor=\"middle\">1e{}</text>", d as i64);
        d += 1.0;
    }
    s.push_str("</svg>\n");
    s
}

/// One series of a [`line_plot_svg`].
pub struct Series<'a> {
    pub name: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

/// Finite min and max, widened when degenerate.
fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Overlaid polylines on linear axes. Long series are decimated to about
/// 2000 points.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let (left, top, w, h) = (70.0, 40.0, 560.0, 320.0);
    let (x0, x1) = span(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = span(series.iter().flat_map(|s| s.y.iter().copied()));
    let px = |x: f64| left + w * (x - x0) / (x1 - x0);
    let py = |y: f64| top + h * (1.0 - (y - y0) / (y1 - y0));
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        left + w + 160.0,
        top + h + 50.0
    );
    let _ = writeln!(s, "<text x=\"{left}\" y=\"20\" font-size=\"13\">{}</text>", escape(title));
    let _ = writeln!(
        s,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#333333\"/>"
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{xv:.3e}</text>", px(xv), top + h + 16.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{yv:.3e}</text>", left - 4.0, py(yv) + 4.0);
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", left + w / 2.0, top + h + 36.0, escape(x_label));
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{}</text>",
        top + h / 2.0,
        top + h / 2.0,
        escape(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let n = ser.x.len().min(ser.y.len());
        let stride = n.div_ceil(2000).max(1);
        let mut pts = String::new();
        for i in (0..n).step_by(stride).chain(std::iter::once(n.saturating_sub(1))) {
            if n == 0 || !(ser.x[i].is_finite() && ser.y[i].is_finite()) {
                continue;
            }
            let _ = write!(pts, "{:.2},{:.2} ", px(ser.x[i]), py(ser.y[i]));
        }
        let dash = if k > 0 { " stroke-dasharray=\"6 3\"" } else { "" };
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>",
            pts.trim_end()
        );
        let ly = top + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>",
            left + w + 10.0,
            left + w + 30.0
        );
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">{}</text>", left + w + 34.0, ly + 4.0, escape(ser.name));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_numbers() {
        assert_eq!(short_number(0.3), "0.3");
        assert_eq!(short_number(0.8512), "0.851");
        assert_eq!(short_number(1.0), "1");
        assert_eq!(short_number(-0.0001), "0");
        assert_eq!(signed(0.25), "+0.25");
        assert_eq!(signed(-2.0), "-2");
    }

    #[test]
    fn compact_durations_below_a_minute() {
        assert_eq!(table_duration(14.2), "14s");
        assert_eq!(table_duration(2259.0), "37 min 39 s");
        assert_eq!(table_duration(59.6), "1 min 0 s");
    }

    #[test]
    fn matrix_colors_follow_rank() {
        let mut m = ResultMatrix {
            values: [[0.0; CLASSES]; CLASSES],
            rows_per_class: [1; CLASSES],
            unit: "A".into(),
        };
        m.values[0] = [5.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        m.values[1] = [5.0, 4.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        m.values[2] = [5.0, 4.0, 0.0, 3.0, -2.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let c = matrix_colors(&m);
        assert_eq!(c[0][0], Some(GREEN));
        assert_eq!(c[0].iter().filter(|x| x.is_some()).count(), 1);
        assert_eq!(c[1][1], Some(APRICOT));
        assert_eq!(c[1][3], Some(RED));
        assert_eq!(c[2][2], Some(BLUE));
        assert_eq!(c[2][4], Some(RED));
    }

    #[test]
    fn svgs_are_well_formed_enough() {
        let m = ResultMatrix {
            values: [[1e-3; CLASSES]; CLASSES],
            rows_per_class: [1; CLASSES],
            unit: "amperes".into(),
        };
        let s = matrix_svg(&m);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<rect").count(), 100);
        assert!(s.contains(">1.000<"));
        let t = timing_svg(&RuntimeBreakdown { sd_latency: 2260.0, pin_writes: 1e-3, adc_reads: 0.6, settle: 0.0 }, Some(14.0));
        assert_eq!(t.matches("<rect").count(), 6);
        let x = [0.0, 1.0, 2.0];
        let p = line_plot_svg("t", "x", "y", &[Series { name: "a<b", x: &x, y: &x }]);
        assert!(p.contains("a&lt;b"));
        assert_eq!(p.matches("<polyline").count(), 1);
    }
}
