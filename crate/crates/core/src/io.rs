//! Delimited numeric input and JSON model files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Result, WmcenError};
use crate::types::{ClusterState, FitResult, Hyperparams};

pub const SCHEMA_VERSION: u32 = 1;

/// Reads a rectangular numeric table. With `has_header` the first line is
/// skipped. Errors name the 1-based line and column of the offending cell.
pub fn load_csv(path: &Path, has_header: bool, delimiter: u8) -> Result<DMatrix<f64>> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let mut values = Vec::new();
    let mut ncols: Option<usize> = None;
    let mut nrows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            WmcenError::Parse {
                line,
                col: 0,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(nrows + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match ncols {
            None => ncols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(WmcenError::Parse {
                    line,
                    col: record.len().min(c) + 1,
                    message: format!("expected {c} fields, found {}", record.len()),
                });
            }
            Some(_) => {}
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| WmcenError::Parse {
                line,
                col: j + 1,
                message: format!("'{cell}' is not a number"),
            })?;
            values.push(v);
        }
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| WmcenError::Parse {
        line: 1,
        col: 1,
        message: "no data rows".into(),
    })?;
    Ok(DMatrix::from_row_slice(nrows, ncols, &values))
}

/// Writes `m` row by row with full round-trip precision.
pub fn write_csv<W: Write>(out: W, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| WmcenError::Io(std::io::Error::other(e));
    if let Some(h) = header {
        writer.write_record(h).map_err(csv_err)?;
    }
    for i in 0..m.nrows() {
        writer
            .write_record(m.row(i).iter().map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

/// Persisted fit. Matrices are stored as lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub p: usize,
    pub q: usize,
    pub k: usize,
    pub coefficients: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub hyperparams: Hyperparams,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub rejected_sweeps: usize,
    pub converged: bool,
    pub objective: f64,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(context: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    check_dims(context, nrows, rows.len())?;
    for r in rows {
        check_dims(context, ncols, r.len())?;
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl ModelFile {
    pub fn from_fit(fit: &FitResult) -> Self {
        ModelFile {
            schema_version: SCHEMA_VERSION,
            p: fit.b.nrows(),
            q: fit.b.ncols(),
            k: fit.clusters.k(),
            coefficients: rows(&fit.b),
            intercepts: fit.intercepts.iter().copied().collect(),
            assignment: fit.clusters.assignment().to_vec(),
            centroids: rows(fit.clusters.centroids()),
            hyperparams: fit.hyperparams,
            inner_iters: fit.inner_iters,
            outer_iters: fit.outer_iters,
            rejected_sweeps: fit.rejected_sweeps,
            converged: fit.converged,
            objective: fit.objective(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(WmcenError::Model(format!(
                "unsupported schema version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.coefficients()?;
        self.clusters()?;
        check_dims("model intercepts", self.q, self.intercepts.len())
    }

    /// p x q coefficient matrix.
    pub fn coefficients(&self) -> Result<DMatrix<f64>> {
        from_rows("model coefficients", &self.coefficients, self.p, self.q)
    }

    pub fn intercepts(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.intercepts)
    }

    pub fn clusters(&self) -> Result<ClusterState> {
        check_dims("model assignment", self.q, self.assignment.len())?;
        let v = from_rows("model centroids", &self.centroids, self.p, self.k)?;
        ClusterState::new(self.assignment.clone(), v)
    }

    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        crate::solver::predict(&self.coefficients()?, &self.intercepts(), x_new)
    }
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, model).map_err(|e| WmcenError::Model(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let file = File::open(path)?;
    let model: ModelFile =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| WmcenError::Model(e.to_string()))?;
    model.validate()?;
    Ok(model)
}
