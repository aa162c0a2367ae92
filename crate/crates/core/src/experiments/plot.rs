//! Minimal SVG line chart: categorical x (grid values), mean test MAE on y,
//! one series per model.

use std::fmt::Write;

use super::ResultTable;
use crate::error::{Error, Result};

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders mean test MAE per grid value and model. Cells where every seed
/// failed are left out of their series.
pub fn emit_plot(table: &ResultTable) -> Result<String> {
    let aggs = table.aggregates();
    if aggs.is_empty() {
        return Err(Error::Config("cannot plot an empty result table".into()));
    }
    let mut xs: Vec<f64> = Vec::new();
    let mut models: Vec<String> = Vec::new();
    for a in &aggs {
        if !xs.contains(&a.value) {
            xs.push(a.value);
        }
        if !models.contains(&a.model()) {
            models.push(a.model());
        }
    }
    let ys: Vec<f64> = aggs.iter().filter_map(|a| a.mean.map(|m| m.mae)).collect();
    let (mut lo, mut hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &y| (l.min(y), h.max(y)));
    if ys.is_empty() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = if hi > lo { 0.08 * (hi - lo) } else { lo.abs().max(1e-3) * 0.1 };
    lo = (lo - pad).max(0.0);
    hi += pad;

    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let x_at = |i: usize| {
        if xs.len() == 1 {
            LEFT + pw / 2.0
        } else {
            LEFT + pw * i as f64 / (xs.len() - 1) as f64
        }
    };
    let y_at = |y: f64| TOP + ph * (1.0 - (y - lo) / (hi - lo));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">Test MAE vs {}</text>"#,
        LEFT + pw / 2.0,
        table.axis
    );
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT:.2},{TOP:.2} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y_at(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.4}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for (i, x) in xs.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            x_at(i),
            TOP + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 14.0,
        table.axis
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">MAE</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (mi, model) in models.iter().enumerate() {
        let color = PALETTE[mi % PALETTE.len()];
        let points: Vec<(f64, f64)> = xs
            .iter()
            .enumerate()
            .filter_map(|(i, x)| {
                aggs.iter()
                    .find(|a| a.value == *x && a.model() == *model)
                    .and_then(|a| a.mean)
                    .map(|m| (x_at(i), y_at(m.mae)))
            })
            .collect();
        if points.len() > 1 {
            let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
        }
        for (x, y) in &points {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#);
        }
        let ly = TOP + 10.0 + 20.0 * mi as f64;
        let lx = W - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"#,
            ly - 10.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 18.0, esc(model));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{Axis, RunKey, RunResult, RunSummary};
    use crate::metrics::MetricReport;
    use crate::nn::Arch;
    use crate::pinn_loss::LossBreakdown;
    use crate::training::Variant;

    fn run(value: f64, arch: Arch, mae: f64) -> RunResult {
        RunResult {
            key: RunKey {
                value,
                arch,
                variant: Variant::Plain,
                seed: 1,
            },
            outcome: Ok(RunSummary {
                metrics: MetricReport {
                    mae,
                    mse: mae * mae,
                    rmse: mae,
                    n: 1,
                },
                losses: LossBreakdown::default(),
                clip_events: 0,
            }),
            report: None,
        }
    }

    #[test]
    fn empty_table_errors() {
        let t = ResultTable {
            axis: Axis::Lambda,
            runs: vec![],
        };
        assert!(emit_plot(&t).is_err());
    }

    #[test]
    fn single_point_renders_a_marker() {
        let t = ResultTable {
            axis: Axis::Lambda,
            runs: vec![run(0.5, Arch::Mlp, 0.02)],
        };
        let svg = emit_plot(&t).unwrap();
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(!svg.contains("<polyline"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn one_series_per_model_and_deterministic() {
        let t = ResultTable {
            axis: Axis::Noise,
            runs: vec![
                run(0.0, Arch::Mlp, 0.01),
                run(0.0, Arch::Lstm, 0.02),
                run(0.1, Arch::Mlp, 0.03),
                run(0.1, Arch::Lstm, 0.04),
            ],
        };
        let svg = emit_plot(&t).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 4);
        assert_eq!(svg, emit_plot(&t).unwrap());
    }
}
