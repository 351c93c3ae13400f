//! Score curves and recommendation paths from run logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use besd_core::besd::{evaluations, read_log_file, split_log, LogRecord};

use crate::ratio::mean_se;

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CurvePoint {
    pub method: String,
    pub cost: u64,
    pub mean: f64,
    /// Two standard errors across runs; absent for a single run.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PathRow {
    pub method: String,
    pub seed: u64,
    pub iteration: usize,
    pub subgoal: usize,
    pub x0: f64,
    pub x1: Option<f64>,
}

/// Loads a log, naming the file in parse errors.
pub fn load(path: &Path) -> Result<Vec<LogRecord>> {
    read_log_file(path).with_context(|| format!("reading {}", path.display()))
}

/// Mean over runs of each method's checkpoint scores, with a two-standard-error band.
pub fn score_curves(logs: &[Vec<LogRecord>]) -> Result<Vec<CurvePoint>> {
    let mut by_method: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for records in logs {
        let (header, _) = split_log(records)?;
        for e in evaluations(records) {
            by_method
                .entry(header.method.clone())
                .or_default()
                .entry(e.cost)
                .or_default()
                .push(e.mean);
        }
    }
    let mut out = vec![];
    for (method, costs) in by_method {
        for (cost, means) in costs {
            let (mean, se) = mean_se(&means);
            let band = means.len() > 1;
            out.push(CurvePoint {
                method: method.clone(),
                cost,
                mean,
                lower: band.then_some(mean - 2.0 * se),
                upper: band.then_some(mean + 2.0 * se),
                runs: means.len(),
            });
        }
    }
    Ok(out)
}

/// One row per subgoal of each iteration's recommended design.
pub fn recommendation_path(records: &[LogRecord]) -> Result<Vec<PathRow>> {
    let (header, obs) = split_log(records)?;
    let dim = header.space.point_dim;
    let mut rows = vec![];
    for (iteration, theta) in obs.iter().filter_map(|o| o.theta_rec.as_ref()).enumerate() {
        for (subgoal, point) in theta.chunks(dim).enumerate() {
            rows.push(PathRow {
                method: header.method.clone(),
                seed: header.seed,
                iteration: iteration + 1,
                subgoal,
                x0: point[0],
                x1: point.get(1).copied(),
            });
        }
    }
    Ok(rows)
}

/// Polyline chart of the score curves with shaded bands.
pub fn render_svg(points: &[CurvePoint]) -> String {
    let (w, h, m) = (720.0, 440.0, 60.0);
    let x_max = points.iter().map(|p| p.cost).max().unwrap_or(1).max(1) as f64;
    let lo = points
        .iter()
        .map(|p| p.lower.unwrap_or(p.mean))
        .fold(f64::INFINITY, f64::min);
    let hi = points
        .iter()
        .map(|p| p.upper.unwrap_or(p.mean))
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (lo.min(0.0), lo.max(0.0) + 1.0)
    };
    let sx = |c: f64| m + c / x_max * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - lo) / (hi - lo) * (h - 2.0 * m);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{m},{m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">total cost</text>"#,
        w / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{m}" y="{}" text-anchor="middle">0</text>"#,
        h - m + 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_max}</text>"#,
        w - m,
        h - m + 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">{lo:.3}</text>"#,
        m - 5.0,
        sy(lo)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">{hi:.3}</text>"#,
        m - 5.0,
        sy(hi) + 4.0
    );

    let mut methods: Vec<&str> = points.iter().map(|p| p.method.as_str()).collect();
    methods.dedup();
    for (i, method) in methods.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<&CurvePoint> = points.iter().filter(|p| p.method == *method).collect();
        if pts.iter().all(|p| p.lower.is_some()) && pts.len() > 1 {
            let upper = pts
                .iter()
                .map(|p| format!("{:.2},{:.2}", sx(p.cost as f64), sy(p.upper.unwrap())));
            let lower = pts
                .iter()
                .rev()
                .map(|p| format!("{:.2},{:.2}", sx(p.cost as f64), sy(p.lower.unwrap())));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                poly.join(" ")
            );
        }
        let line: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.cost as f64), sy(p.mean)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{method}</text>"#,
            w - m + 5.0,
            m + 16.0 * i as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `curves.csv`, `curves.svg` and `recommendations.csv` into
/// `out_dir`. Returns the written files; an empty log list writes nothing.
pub fn emit_plots(logs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if logs.is_empty() {
        return Ok(vec![]);
    }
    let parsed: Vec<Vec<LogRecord>> = logs.iter().map(|p| load(p)).collect::<Result<_>>()?;
    for (p, records) in logs.iter().zip(&parsed) {
        split_log(records).with_context(|| format!("reading {}", p.display()))?;
    }
    std::fs::create_dir_all(out_dir)?;
    let curves = score_curves(&parsed)?;
    let mut paths = vec![];
    for records in &parsed {
        paths.extend(recommendation_path(records)?);
    }
    let files = [
        out_dir.join("curves.csv"),
        out_dir.join("curves.svg"),
        out_dir.join("recommendations.csv"),
    ];
    write_csv(&files[0], &curves)?;
    std::fs::write(&files[1], render_svg(&curves))?;
    write_csv(&files[2], &paths)?;
    Ok(files.to_vec())
}
