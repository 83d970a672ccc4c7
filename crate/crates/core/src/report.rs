//! Study tables: one CSV row per replication, summaries in "value (sd)" form,
//! and SVG strip plots of the per-replication metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, WmcenError};
use crate::simgen::StudyResult;
use crate::stats::mean_sd;

/// One line of a study table. Metrics are empty for failed replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub method: String,
    pub p: usize,
    pub eta: f64,
    pub xi: f64,
    pub error: u8,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub rep: usize,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub k: Option<usize>,
    pub median_ape: Option<f64>,
    pub mse_beta: Option<f64>,
    pub converged: Option<bool>,
    pub status: String,
}

/// Flattens study results into rows ordered by study, then replication.
pub fn study_rows(results: &[StudyResult]) -> Vec<StudyRow> {
    let mut rows = Vec::new();
    for r in results {
        let base = |rep: usize| StudyRow {
            method: r.method.to_string(),
            p: r.spec.p,
            eta: r.spec.eta,
            xi: r.spec.xi,
            error: r.spec.error_kind.number(),
            n_train: r.spec.n_train,
            n_test: r.spec.n_test,
            seed: r.spec.seed,
            rep,
            lambda: None,
            gamma: None,
            k: None,
            median_ape: None,
            mse_beta: None,
            converged: None,
            status: "ok".into(),
        };
        let mut block: Vec<StudyRow> = r
            .per_rep
            .iter()
            .map(|o| StudyRow {
                lambda: Some(o.hyperparams.lambda),
                gamma: Some(o.hyperparams.gamma),
                k: Some(o.hyperparams.k),
                median_ape: Some(o.median_ape),
                mse_beta: Some(o.mse_beta),
                converged: Some(o.converged),
                ..base(o.rep)
            })
            .collect();
        block.extend(r.failures.iter().map(|(rep, msg)| StudyRow {
            status: format!("failed: {msg}"),
            ..base(*rep)
        }));
        block.sort_by_key(|row| row.rep);
        rows.extend(block);
    }
    rows
}

fn csv_error(e: csv::Error) -> WmcenError {
    WmcenError::Io(std::io::Error::other(e))
}

pub fn write_study_table<W: Write>(out: W, rows: &[StudyRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_study_table<R: Read>(input: R) -> Result<Vec<StudyRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        rows.push(row.map_err(|e: csv::Error| WmcenError::Parse {
            line: i + 2,
            col: 0,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Metrics of one design cell and method.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub method: String,
    pub p: usize,
    pub eta: f64,
    pub xi: f64,
    pub error: u8,
    pub ape: Vec<f64>,
    pub mse: Vec<f64>,
    pub failures: usize,
}

impl CellSummary {
    pub fn ape_mean_sd(&self) -> (f64, f64) {
        mean_sd(&self.ape)
    }

    pub fn mse_mean_sd(&self) -> (f64, f64) {
        mean_sd(&self.mse)
    }

    fn label(&self) -> String {
        format!(
            "Error {} p={} eta={} xi={} {}",
            self.error, self.p, self.eta, self.xi, self.method
        )
    }
}

/// Groups rows by (error, p, eta, xi, method) in sorted order.
pub fn summarize(rows: &[StudyRow]) -> Vec<CellSummary> {
    type Key = (u8, usize, u64, u64, String);
    let mut cells: BTreeMap<Key, CellSummary> = BTreeMap::new();
    for row in rows {
        let key = (row.error, row.p, row.eta.to_bits(), row.xi.to_bits(), row.method.clone());
        let cell = cells.entry(key).or_insert_with(|| CellSummary {
            method: row.method.clone(),
            p: row.p,
            eta: row.eta,
            xi: row.xi,
            error: row.error,
            ape: Vec::new(),
            mse: Vec::new(),
            failures: 0,
        });
        match (row.median_ape, row.mse_beta) {
            (Some(a), Some(m)) => {
                cell.ape.push(a);
                cell.mse.push(m);
            }
            _ => cell.failures += 1,
        }
    }
    cells.into_values().collect()
}

/// "0.706 (0.010)".
pub fn value_sd(mean: f64, sd: f64) -> String {
    format!("{mean:.3} ({sd:.3})")
}

/// Plain-text table with one line per cell.
pub fn render_summary(cells: &[CellSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<7} {:>4} {:>5} {:>5} {:<7} {:>5} {:>16} {:>16} {:>6}",
        "error", "p", "eta", "xi", "method", "reps", "median APE (sd)", "MSE beta (sd)", "failed"
    );
    for c in cells {
        let (am, asd) = c.ape_mean_sd();
        let (mm, msd) = c.mse_mean_sd();
        let _ = writeln!(
            out,
            "{:<7} {:>4} {:>5} {:>5} {:<7} {:>5} {:>16} {:>16} {:>6}",
            c.error,
            c.p,
            c.eta,
            c.xi,
            c.method,
            c.ape.len(),
            value_sd(am, asd),
            value_sd(mm, msd),
            c.failures
        );
    }
    out.push_str("summaries are means across replications with sample sd in parentheses\n");
    out
}

const WIDTH: f64 = 640.0;
const ROW_HEIGHT: f64 = 36.0;
const LEFT: f64 = 260.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;

/// Horizontal strip plot: one row per cell, one dot per replication and a bar
/// at the mean.
pub fn strip_plot_svg(title: &str, cells: &[CellSummary], metric: fn(&CellSummary) -> &[f64]) -> String {
    let values: Vec<f64> = cells.iter().flat_map(|c| metric(c).iter().copied()).collect();
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let sx = |v: f64| LEFT + (v - lo) / (hi - lo) * plot_w;
    let height = TOP + ROW_HEIGHT * cells.len() as f64 + 40.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" font-size="14">{}</text>"#, LEFT, escape(title));
    for (row, c) in cells.iter().enumerate() {
        let y = TOP + ROW_HEIGHT * (row as f64 + 0.5);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            y + 4.0,
            escape(&c.label())
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" x2="{:.1}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/>"##,
            WIDTH - RIGHT
        );
        for &v in metric(c) {
            let _ = writeln!(
                svg,
                r##"<circle cx="{:.2}" cy="{y:.1}" r="3" fill="#1f77b4" fill-opacity="0.6"/>"##,
                sx(v)
            );
        }
        if !metric(c).is_empty() {
            let (mean, _) = mean_sd(metric(c));
            let _ = writeln!(
                svg,
                r##"<line x1="{0:.2}" x2="{0:.2}" y1="{1:.1}" y2="{2:.1}" stroke="#d62728" stroke-width="2"/>"##,
                sx(mean),
                y - 10.0,
                y + 10.0
            );
        }
    }
    let axis_y = TOP + ROW_HEIGHT * cells.len() as f64 + 6.0;
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" x2="{:.1}" y1="{axis_y:.1}" y2="{axis_y:.1}" stroke="black"/>"#,
        WIDTH - RIGHT
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.3}</text>"#,
            sx(v),
            axis_y + 16.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
