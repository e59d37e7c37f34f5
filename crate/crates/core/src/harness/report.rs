//! Comparison table and static SVG time-series charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

use super::simulate::RunReport;

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub controller: String,
    pub total_cost: f64,
    /// `1 - cost / cost_reference`; the reference is the run named
    /// `baseline`, or the first run if none is.
    pub savings: f64,
    pub e_rmse: f64,
    pub n_switch: usize,
    pub time_mean: f64,
    pub time_std: f64,
    pub repairs: usize,
    pub mean_load: f64,
}

pub fn comparison(runs: &[RunReport]) -> Vec<ComparisonRow> {
    let reference = runs.iter().find(|r| r.controller == "baseline").or(runs.first()).map_or(f64::NAN, |r| r.total_cost);
    runs.iter()
        .map(|r| ComparisonRow {
            controller: r.controller.clone(),
            total_cost: r.total_cost,
            savings: 1.0 - r.total_cost / reference,
            e_rmse: r.e_rmse,
            n_switch: r.n_switch,
            time_mean: r.time_mean,
            time_std: r.time_std,
            repairs: r.repairs,
            mean_load: r.mean_load,
        })
        .collect()
}

pub fn write_comparison_csv(runs: &[RunReport], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in comparison(runs) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// A named line on a chart.
pub struct Series<'a> {
    pub name: &'a str,
    pub values: Vec<f64>,
}

/// Drawing area of every chart, in SVG user units.
pub const WIDTH: f64 = 960.0;
pub const HEIGHT: f64 = 460.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const MAIN_TOP: f64 = 40.0;
const MAIN_BOTTOM: f64 = 300.0;
const PRICE_TOP: f64 = 340.0;
const PRICE_BOTTOM: f64 = 420.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Plot rectangles `(x0, y0, x1, y1)` of the main panel and the price strip.
pub fn panels() -> [(f64, f64, f64, f64); 2] {
    [(LEFT, MAIN_TOP, WIDTH - RIGHT, MAIN_BOTTOM), (LEFT, PRICE_TOP, WIDTH - RIGHT, PRICE_BOTTOM)]
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn polyline(out: &mut String, t: &[f64], v: &[f64], rect: (f64, f64, f64, f64), xr: (f64, f64), yr: (f64, f64), color: &str) {
    let (x0, y0, x1, y1) = rect;
    let mut pts = String::new();
    for (ti, vi) in t.iter().zip(v) {
        if !vi.is_finite() {
            continue;
        }
        let px = x0 + (ti - xr.0) / (xr.1 - xr.0) * (x1 - x0);
        let py = y1 - (vi - yr.0) / (yr.1 - yr.0) * (y1 - y0);
        let _ = write!(pts, "{px:.2},{py:.2} ");
    }
    let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#, pts.trim_end());
}

fn axes(out: &mut String, rect: (f64, f64, f64, f64), yr: (f64, f64), label: &str) {
    let (x0, y0, x1, y1) = rect;
    let _ = writeln!(out, r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#444"/>"##, x1 - x0, y1 - y0);
    for (frac, v) in [(0.0, yr.0), (0.5, 0.5 * (yr.0 + yr.1)), (1.0, yr.1)] {
        let y = y1 - frac * (y1 - y0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, tick(v));
    }
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" font-size="12" transform="rotate(-90 14 {:.2})" text-anchor="middle">{label}</text>"#,
        0.5 * (y0 + y1),
        0.5 * (y0 + y1)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

/// Line chart of `series` over time `hours`, with the price in a strip below.
pub fn line_chart(title: &str, y_label: &str, hours: &[f64], series: &[Series], price: &[f64]) -> String {
    let [main, strip] = panels();
    let xr = range(hours.iter().copied());
    let yr = range(series.iter().flat_map(|s| s.values.iter().copied()));
    let pr = range(price.iter().copied());
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#, 0.5 * WIDTH, escape(title));
    axes(&mut out, main, yr, &escape(y_label));
    axes(&mut out, strip, pr, "$/kWh");
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        polyline(&mut out, hours, &s.values, main, xr, yr, color);
        let ly = MAIN_TOP + 14.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">{}</text>"#, lx + 24.0, ly + 4.0, escape(s.name));
    }
    polyline(&mut out, hours, price, strip, xr, pr, "#555");
    for (frac, v) in [(0.0, xr.0), (0.5, 0.5 * (xr.0 + xr.1)), (1.0, xr.1)] {
        let x = strip.0 + frac * (strip.2 - strip.0);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" font-size="11" text-anchor="middle">{v:.1} h</text>"#, PRICE_BOTTOM + 16.0);
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `comparison.csv` and four charts (power, storage, chiller count and
/// load tracking, each against price) into `dir`. Returns the paths written.
pub fn write_report(runs: &[RunReport], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = vec![dir.join("comparison.csv")];
    write_comparison_csv(runs, &written[0])?;
    let Some(first) = runs.first() else {
        return Ok(written);
    };
    let t0 = first.rows.first().map_or(0.0, |r| r.timestamp);
    let hours: Vec<f64> = first.rows.iter().map(|r| (r.timestamp - t0) / 3600.0).collect();
    let price: Vec<f64> = first.rows.iter().map(|r| r.price).collect();
    let pick = |f: fn(&super::simulate::TrajectoryRow) -> f64| -> Vec<Series> {
        runs.iter().map(|r| Series { name: &r.controller, values: r.rows.iter().map(f).collect() }).collect()
    };
    let mut load = pick(|r| r.outputs.q_l);
    load.push(Series { name: "reference", values: first.rows.iter().map(|r| r.q_l_ref).collect() });
    let charts = [
        ("power.svg", "Total electric power", "kW", pick(|r| r.outputs.p_tot)),
        ("storage.svg", "Cold storage fraction", "S_twc", pick(|r| r.state.s_twc)),
        ("chillers.svg", "Chillers running", "n_ch", pick(|r| r.input.n_ch as f64)),
        ("load.svg", "Load served", "kW", load),
    ];
    for (file, title, label, series) in charts {
        let path = dir.join(file);
        std::fs::write(&path, line_chart(title, label, &hours, &series, &price))?;
        written.push(path);
    }
    Ok(written)
}
