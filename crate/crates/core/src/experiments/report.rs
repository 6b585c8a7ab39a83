use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Method, Problem};
use super::metrics::{mean, std_dev};
use super::runner::{CellResult, ExperimentReport};
use crate::error::{Error, Result};

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const FIT_EXAMPLES_CSV: &str = "fit_examples.csv";

const RESULTS_HEADER: [&str; 8] = [
    "problem",
    "method",
    "n_train",
    "n_context",
    "repetition",
    "nmse",
    "nmse_median",
    "status",
];

/// Mean and sample standard deviation over repetitions of one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub problem: Problem,
    pub method: Method,
    pub n_train: usize,
    pub n_context: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub nmse_mean: Option<f64>,
    pub nmse_std: Option<f64>,
    /// Mean over repetitions of the per-repetition population median.
    pub nmse_median_mean: Option<f64>,
}

pub fn summarize(cells: &[CellResult]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Problem, Method, usize, usize), Vec<&CellResult>> = BTreeMap::new();
    for c in cells {
        groups.entry((c.problem, c.method, c.n_train, c.n_context)).or_default().push(c);
    }
    groups
        .into_iter()
        .map(|((problem, method, n_train, n_context), rows)| {
            let ok: Vec<&&CellResult> = rows.iter().filter(|c| c.ok() && c.nmse.is_some()).collect();
            let vals: Vec<f64> = ok.iter().filter_map(|c| c.nmse).collect();
            let meds: Vec<f64> = ok.iter().filter_map(|c| c.nmse_median).collect();
            SummaryRow {
                problem,
                method,
                n_train,
                n_context,
                n_ok: vals.len(),
                n_failed: rows.len() - vals.len(),
                nmse_mean: (!vals.is_empty()).then(|| mean(&vals)),
                nmse_std: (!vals.is_empty()).then(|| std_dev(&vals)),
                nmse_median_mean: (!meds.is_empty()).then(|| mean(&meds)),
            }
        })
        .collect()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

/// Header-only output when empty, so every file always exists.
fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = writer(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<CellResult>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != RESULTS_HEADER {
        return Err(Error::Data(format!("{} has unexpected columns", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes summary.csv and one SVG per problem from the cell results alone.
pub fn emit_summary(cells: &[CellResult], dir: &Path) -> Result<Vec<PathBuf>> {
    let summary = summarize(cells);
    let mut written = Vec::new();
    let path = dir.join(SUMMARY_CSV);
    write_rows(
        &path,
        &[
            "problem",
            "method",
            "n_train",
            "n_context",
            "n_ok",
            "n_failed",
            "nmse_mean",
            "nmse_std",
            "nmse_median_mean",
        ],
        &summary,
    )?;
    written.push(path);
    let mut problems: Vec<Problem> = summary.iter().map(|s| s.problem).collect();
    problems.dedup();
    if problems.is_empty() {
        let path = dir.join("nmse.svg");
        std::fs::write(&path, error_bar_svg("NMSE", &[])).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    for p in problems {
        let rows: Vec<&SummaryRow> = summary.iter().filter(|s| s.problem == p).collect();
        let path = dir.join(format!("nmse_{}.svg", p.name()));
        std::fs::write(&path, error_bar_svg(&format!("NMSE, {}", p.name()), &rows)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Writes every report file into `dir` and returns their paths.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let path = dir.join(RESULTS_CSV);
    write_rows(&path, &RESULTS_HEADER, &report.cells)?;
    written.push(path);
    let path = dir.join(CONVERGENCE_CSV);
    write_rows(
        &path,
        &["problem", "method", "n_train", "repetition", "phase", "step", "loss", "val_loss"],
        &report.convergence,
    )?;
    written.push(path);
    let path = dir.join(FIT_EXAMPLES_CSV);
    write_rows(
        &path,
        &[
            "problem",
            "method",
            "n_train",
            "n_context",
            "repetition",
            "structure",
            "temperature",
            "dim",
            "truth",
            "prediction",
        ],
        &report.fit_examples,
    )?;
    written.push(path);
    written.extend(emit_summary(&report.cells, dir)?);
    Ok(written)
}

const COLOURS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Mean ± std against training-population size on a log NMSE axis.
/// Methods that ignore the training population sit at `n_train = 0`.
fn error_bar_svg(title: &str, rows: &[&SummaryRow]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let mut series: BTreeMap<(Method, usize), Vec<(usize, f64, f64)>> = BTreeMap::new();
    for r in rows {
        if let (Some(m), Some(s)) = (r.nmse_mean, r.nmse_std) {
            series.entry((r.method, r.n_context)).or_default().push((r.n_train, m, s));
        }
    }
    let xs: Vec<usize> = series.values().flatten().map(|p| p.0).collect();
    let (xmin, xmax) = (
        xs.iter().copied().min().unwrap_or(0) as f64,
        xs.iter().copied().max().unwrap_or(1) as f64,
    );
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let positives: Vec<f64> = series
        .values()
        .flatten()
        .flat_map(|&(_, m, s)| [m, m + s, m - s])
        .filter(|v| *v > 0.0)
        .collect();
    let lo = positives.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = positives.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (ylo, yhi) = if lo.is_finite() && hi.is_finite() {
        (lo.log10().floor(), hi.log10().ceil().max(lo.log10().floor() + 1.0))
    } else {
        (-1.0, 2.0)
    };
    let px = |x: f64| left + (x - xmin) / xspan * pw;
    let py = |y: f64| top + (1.0 - (y.max(10f64.powf(ylo)).log10() - ylo) / (yhi - ylo)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, left + pw / 2.0, title);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut e = ylo as i32;
    while e as f64 <= yhi {
        let y = py(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, left + pw);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">1e{e}</text>"#,
            left - 6.0,
            y + 4.0
        );
        e += 1;
    }
    let mut ticks: Vec<usize> = xs.clone();
    ticks.sort_unstable();
    ticks.dedup();
    for t in ticks {
        let x = px(t as f64);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{t}</text>"#,
            top + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">training structures</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">NMSE (%)</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (k, ((method, nc), pts)) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let shift = (k as f64 - series.len() as f64 / 2.0) * 3.0;
        let mut path = String::new();
        for (i, &(x, m, sd)) in pts.iter().enumerate() {
            let cx = px(x as f64) + shift;
            let _ = write!(path, "{}{cx:.2},{:.2} ", if i == 0 { "M" } else { "L" }, py(m));
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{colour}"/>"#,
                py(m + sd),
                py(m - sd)
            );
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#, py(m));
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{colour}"/>"#, path.trim_end());
        let ly = top + 14.0 + 18.0 * k as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(s, r#"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="{colour}"/>"#, ly - 9.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" font-family="sans-serif" font-size="11">{} ({} ctx)</text>"#,
            lx + 16.0,
            method.name(),
            nc
        );
    }
    s.push_str("</svg>\n");
    s
}
