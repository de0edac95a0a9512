//! Self-contained SVG line plots of the summary medians.
//!
//! Axes are log-log. Whiskers span the interquartile range. Nonpositive
//! values are drawn on the bottom edge; the exact numbers are kept in a
//! data comment at the top of each file.

use std::fmt::Write as _;
use std::path::Path;

use ddpc_core::bench::{ControllerKind, Quartiles, SummaryRow};

use crate::{io_err, Result};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: &[&str] = &["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// Reference curves (SPC, C-SPC, oracle) are dashed.
    pub dashed: bool,
    pub points: Vec<(f64, Quartiles)>,
}

#[derive(Debug, Clone, Copy)]
pub enum Metric {
    JStar,
    JOracle,
    Slack,
}

impl Metric {
    fn pick(&self, r: &SummaryRow) -> Option<Quartiles> {
        match self {
            Metric::JStar => r.j_star,
            Metric::JOracle => r.j_oracle,
            Metric::Slack => r.slack_ms,
        }
    }
}

/// One curve per `(controller, lambda2)` among `controllers`.
pub fn series(rows: &[SummaryRow], metric: Metric, controllers: &[ControllerKind]) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows.iter().filter(|r| controllers.contains(&r.controller)) {
        let Some(q) = metric.pick(r) else { continue };
        let name = match r.lambda2 {
            Some(l) => format!("{} l2={}", r.controller.as_str(), l),
            None => r.controller.as_str().to_string(),
        };
        match out.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push((r.total_samples as f64, q)),
            None => out.push(Series {
                name,
                dashed: r.controller != ControllerKind::Deepc,
                points: vec![(r.total_samples as f64, q)],
            }),
        }
    }
    for s in &mut out {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

fn log_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| *v > 0.0 && v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (-1.0, 0.0);
    }
    let (a, b) = (lo.log10().floor(), hi.log10().ceil());
    if a == b {
        (a - 1.0, b)
    } else {
        (a, b)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(title: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = log_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = log_range(series.iter().flat_map(|s| s.points.iter().flat_map(|p| [p.1.q1, p.1.median, p.1.q3])));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x.log10() - x0) / (x1 - x0) * pw;
    let sy = |y: f64| {
        let l = if y > 0.0 && y.is_finite() { y.log10().clamp(y0, y1) } else { y0 };
        TOP + ph - (l - y0) / (y1 - y0) * ph
    };

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!-- data\nseries,x,q1,median,q3\n");
    for se in series {
        for (x, q) in &se.points {
            let _ = writeln!(s, "{},{},{},{},{}", se.name, x, q.q1, q.median, q.q3);
        }
    }
    s.push_str("-->\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>", LEFT + pw / 2.0, escape(title));
    let _ = writeln!(s, "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>");
    for e in (x0 as i64)..=(x1 as i64) {
        let x = sx(10f64.powi(e as i32));
        let _ = writeln!(s, "<line x1=\"{x:.1}\" y1=\"{TOP}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>", TOP + ph);
        let _ = writeln!(s, "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">1e{e}</text>", TOP + ph + 15.0);
    }
    for e in (y0 as i64)..=(y1 as i64) {
        let y = TOP + ph - (e as f64 - y0) / (y1 - y0) * ph;
        let _ = writeln!(s, "<line x1=\"{LEFT}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>", LEFT + pw);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{e}</text>", LEFT - 5.0, y + 4.0);
    }
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">total samples N_bar</text>", LEFT + pw / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        "<text transform=\"translate(16 {:.1}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (i, se) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if se.dashed { " stroke-dasharray=\"6 3\"" } else { "" };
        let pts: Vec<String> = se.points.iter().map(|(x, q)| format!("{:.1},{:.1}", sx(*x), sy(q.median))).collect();
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>", pts.join(" "));
        for (x, q) in &se.points {
            let px = sx(*x);
            let _ = writeln!(
                s,
                "<line x1=\"{px:.1}\" y1=\"{:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"{color}\"/><circle cx=\"{px:.1}\" cy=\"{:.1}\" r=\"2.5\" fill=\"{color}\"/>",
                sy(q.q1),
                sy(q.q3),
                sy(q.median)
            );
        }
        let ly = TOP + 10.0 + 16.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/><text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(&se.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `fig_slack.svg`, `fig_cost.svg` and `fig_oracle.svg` into `dir`.
pub fn write_figures(dir: &Path, rows: &[SummaryRow]) -> Result<()> {
    use ControllerKind::*;
    let figs = [
        ("fig_slack.svg", "Mean squared slack", "median slack_ms", Metric::Slack, vec![Deepc]),
        ("fig_cost.svg", "Cost criterion", "median J*", Metric::JStar, vec![Deepc, Spc, CausalSpc, Oracle]),
        ("fig_oracle.svg", "Distance from the oracle", "median J_oracle", Metric::JOracle, vec![Deepc, Spc, CausalSpc]),
    ];
    for (file, title, label, metric, ctrls) in figs {
        let path = dir.join(file);
        std::fs::write(&path, render(title, label, &series(rows, metric, &ctrls))).map_err(io_err(&path))?;
    }
    Ok(())
}
