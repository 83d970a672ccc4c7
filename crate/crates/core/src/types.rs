//! Shared data model: datasets, hyperparameters, solver settings and fit results.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Result, WmcenError};

/// Covariates `x` (n x p) paired with responses `y` (n x q).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl Dataset {
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    /// Rows selected by `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        validate_dataset(self.x.select_rows(rows), self.y.select_rows(rows))
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.x, self.y)
    }
}

/// Checks shape and finiteness and wraps the pair into a [`Dataset`].
pub fn validate_dataset(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Dataset> {
    check_dims("row count of y against x", x.nrows(), y.nrows())?;
    if x.nrows() < 2 {
        return Err(WmcenError::TooFewSamples(x.nrows()));
    }
    if x.ncols() == 0 || y.ncols() == 0 {
        return Err(WmcenError::InvalidParameter(
            "x and y need at least one column each".into(),
        ));
    }
    check_finite("x", &x)?;
    check_finite("y", &y)?;
    Ok(Dataset { x, y })
}

pub(crate) fn check_finite(matrix: &'static str, m: &DMatrix<f64>) -> Result<()> {
    // column-major scan, reported as (row, col)
    for (idx, v) in m.iter().enumerate() {
        if !v.is_finite() {
            return Err(WmcenError::NonFinite {
                matrix,
                row: idx % m.nrows(),
                col: idx / m.nrows(),
            });
        }
    }
    Ok(())
}

/// Tuning parameters of the penalized objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda: f64,
    pub gamma: f64,
    pub k: usize,
    pub epsilon: f64,
}

impl Hyperparams {
    pub const DEFAULT_EPSILON: f64 = 1e-6;

    pub fn new(lambda: f64, gamma: f64, k: usize, epsilon: f64) -> Result<Self> {
        let hp = Hyperparams {
            lambda,
            gamma,
            k,
            epsilon,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(WmcenError::InvalidParameter(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(WmcenError::InvalidParameter(format!(
                "gamma must be non-negative and finite, got {}",
                self.gamma
            )));
        }
        if self.k == 0 {
            return Err(WmcenError::InvalidParameter("k must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(WmcenError::InvalidParameter(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Same as [`validate`](Self::validate) plus the `k <= q` rule.
    pub fn validate_for(&self, q: usize) -> Result<()> {
        self.validate()?;
        if self.k > q {
            return Err(WmcenError::InvalidParameter(format!(
                "k = {} exceeds the number of responses q = {q}",
                self.k
            )));
        }
        Ok(())
    }
}

/// Iteration control for the MM solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Absolute objective decrease below which a loop stops.
    pub tol: f64,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    /// Floor applied to |g - r.beta| before it is inverted into a weight.
    pub weight_clamp_delta: f64,
    /// Relative diagonal jitter used once when a block system fails to factor.
    pub ridge_jitter: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-6,
            max_inner_iters: 500,
            max_outer_iters: 100,
            weight_clamp_delta: 1e-8,
            ridge_jitter: 1e-10,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(WmcenError::InvalidParameter("tol must be positive".into()));
        }
        if self.max_inner_iters == 0 || self.max_outer_iters == 0 {
            return Err(WmcenError::InvalidParameter(
                "iteration caps must be at least 1".into(),
            ));
        }
        if self.weight_clamp_delta.is_nan() || self.weight_clamp_delta <= 0.0 {
            return Err(WmcenError::InvalidParameter(
                "weight_clamp_delta must be positive".into(),
            ));
        }
        if self.ridge_jitter.is_nan() || self.ridge_jitter < 0.0 {
            return Err(WmcenError::InvalidParameter(
                "ridge_jitter must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Hard assignment of the q responses to k clusters plus centroid coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    assignment: Vec<usize>,
    v: DMatrix<f64>,
    counts: Vec<usize>,
}

impl ClusterState {
    /// `assignment[s]` is the cluster of response s; `v` is p x k.
    pub fn new(assignment: Vec<usize>, v: DMatrix<f64>) -> Result<Self> {
        let k = v.ncols();
        if k == 0 {
            return Err(WmcenError::InvalidParameter("k must be at least 1".into()));
        }
        let mut counts = vec![0usize; k];
        for (s, &l) in assignment.iter().enumerate() {
            if l >= k {
                return Err(WmcenError::InvalidParameter(format!(
                    "response {s} assigned to cluster {l}, but k = {k}"
                )));
            }
            counts[l] += 1;
        }
        check_finite("centroids", &v)?;
        Ok(ClusterState {
            assignment,
            v,
            counts,
        })
    }

    /// Every response in cluster 0 with zero centroid.
    pub fn single(p: usize, q: usize) -> Self {
        ClusterState {
            assignment: vec![0; q],
            v: DMatrix::zeros(p, 1),
            counts: vec![q],
        }
    }

    pub fn k(&self) -> usize {
        self.v.ncols()
    }

    pub fn q(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, s: usize) -> usize {
        self.assignment[s]
    }

    pub fn centroids(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// The q x k binary membership matrix.
    pub fn membership(&self) -> DMatrix<f64> {
        let mut u = DMatrix::zeros(self.q(), self.k());
        for (s, &l) in self.assignment.iter().enumerate() {
            u[(s, l)] = 1.0;
        }
        u
    }

    pub(crate) fn with_centroids(&self, v: DMatrix<f64>) -> ClusterState {
        ClusterState {
            assignment: self.assignment.clone(),
            v,
            counts: self.counts.clone(),
        }
    }
}

/// Output of [`crate::solver::fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// p x q; column s holds the coefficients of response s.
    pub b: DMatrix<f64>,
    /// Per-response intercepts: median of the training residuals.
    pub intercepts: DVector<f64>,
    pub clusters: ClusterState,
    pub hyperparams: Hyperparams,
    /// Objective value after every accepted update, starting at the initial point.
    pub objective_trace: Vec<f64>,
    pub inner_iters: usize,
    pub outer_iters: usize,
    /// Sweeps discarded because they would have raised the objective.
    pub rejected_sweeps: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial value")
    }
}
