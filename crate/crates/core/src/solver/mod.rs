//! Majorize-minimize solver: alternating weighted least-squares sweeps over the
//! response coefficients with k-means updates of the response clusters.
//!
//! Covariates are column-centred before fitting. The pairwise loss does not
//! see the centring, the cluster term and the ridge start do. Intercepts are
//! reported afterwards as per-response medians of the training residuals.

mod block;
mod cluster;

use nalgebra::{DMatrix, DVector};

pub use block::{update_beta_block, update_psi, update_weights};
pub use cluster::{centroid_gradient, kmeans_init, update_centroids, update_clusters};

use crate::error::{check_dims, Result};
use crate::objective::{objective_l_dagger, ObjectiveBreakdown};
use crate::pairwise::{pairwise_from_matrices, PairwiseSystem};
use crate::stats::median;
use crate::types::{ClusterState, Dataset, FitResult, Hyperparams, SolverConfig};

/// Cached quantities shared by every update of one fit.
#[derive(Debug, Clone)]
pub struct Problem {
    pub ps: PairwiseSystem,
    /// Centred covariates.
    pub x: DMatrix<f64>,
    pub xtx: DMatrix<f64>,
}

impl Problem {
    /// Builds the pairwise system from `x`, `y` as given and caches X^T X of
    /// `x` as given. Centre `x` beforehand when the cluster term should ignore
    /// covariate means.
    pub fn new(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        let ps = pairwise_from_matrices(x, y)?;
        Ok(Problem {
            ps,
            x: x.clone(),
            xtx: x.tr_mul(x),
        })
    }

    pub fn objective(
        &self,
        b: &DMatrix<f64>,
        clusters: &ClusterState,
        hp: &Hyperparams,
    ) -> Result<ObjectiveBreakdown> {
        objective_l_dagger(&self.ps, &self.x, b, clusters, hp)
    }
}

/// Iterate of the MM scheme together with the auxiliary variables built at it.
#[derive(Debug, Clone)]
pub struct MMState {
    pub b: DMatrix<f64>,
    /// m x q majorizer weights.
    pub w: DMatrix<f64>,
    /// p x q diagonals of Psi_s.
    pub psi: DMatrix<f64>,
    pub clusters: ClusterState,
    pub objective: f64,
}

impl MMState {
    /// State anchored at `b`: weights and Psi are computed from `b`.
    pub fn at(
        problem: &Problem,
        b: DMatrix<f64>,
        clusters: ClusterState,
        epsilon: f64,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        let w = update_weights(&problem.ps, &b, cfg)?;
        let psi = update_psi(&b, epsilon);
        Ok(MMState {
            b,
            w,
            psi,
            clusters,
            objective: f64::NAN,
        })
    }
}

pub(crate) fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(x.ncols(), |h, _| x.column(h).mean())
}

pub(crate) fn center_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, h| x[(i, h)] - means[h])
}

/// Per-response ridge start (X^T X + alpha I)^-1 X^T y_s with
/// alpha = 0.1 trace(X^T X) / p, on centred data.
pub fn ridge_start(xc: &DMatrix<f64>, yc: &DMatrix<f64>) -> DMatrix<f64> {
    let p = xc.ncols();
    let mut gram = xc.tr_mul(xc);
    let alpha = (0.1 * gram.trace() / p as f64).max(1e-12);
    for h in 0..p {
        gram[(h, h)] += alpha;
    }
    let rhs = xc.tr_mul(yc);
    match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => DMatrix::zeros(p, yc.ncols()),
    }
}

/// One Gauss-Seidel pass over the responses followed by the centroid refresh.
pub fn sweep(
    problem: &Problem,
    state: &MMState,
    hp: &Hyperparams,
    cfg: &SolverConfig,
) -> Result<MMState> {
    let mut next = state.clone();
    for d in 0..problem.ps.q() {
        // the weights and Psi of column d depend only on column d, which has
        // not moved yet in this pass
        let beta_d = next.b.column(d).into_owned();
        let w = block::weights_for(&problem.ps, d, &beta_d, cfg.weight_clamp_delta);
        next.w.set_column(d, &w);
        for h in 0..beta_d.len() {
            next.psi[(h, d)] = 1.0 / (2.0 * (beta_d[h].abs() + hp.epsilon)).sqrt();
        }
        let updated = update_beta_block(d, problem, &next, hp, cfg)?;
        next.b.set_column(d, &updated);
    }
    next.clusters = update_centroids(&next.b, &next.clusters)?;
    next.objective = problem.objective(&next.b, &next.clusters, hp)?.total;
    Ok(next)
}

struct Trace {
    values: Vec<f64>,
    inner_iters: usize,
    rejected: usize,
}

impl Trace {
    fn last(&self) -> f64 {
        *self.values.last().expect("initialized with a value")
    }
}

/// Runs the inner MM loop until the objective decrease drops below `tol`.
/// Returns true when the threshold (not the cap) ended the loop.
fn inner_loop(
    problem: &Problem,
    state: &mut MMState,
    hp: &Hyperparams,
    cfg: &SolverConfig,
    trace: &mut Trace,
) -> Result<bool> {
    for _ in 0..cfg.max_inner_iters {
        let next = sweep(problem, state, hp, cfg)?;
        trace.inner_iters += 1;
        if next.objective.is_nan() || next.objective > state.objective {
            // clamped weights can break tangency by up to delta/2 per pair
            trace.rejected += 1;
            return Ok(true);
        }
        let decrease = state.objective - next.objective;
        *state = next;
        trace.values.push(state.objective);
        if decrease < cfg.tol {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Alternates membership and centroid updates until the objective settles.
fn cluster_loop(
    problem: &Problem,
    state: &mut MMState,
    hp: &Hyperparams,
    cfg: &SolverConfig,
    trace: &mut Trace,
) -> Result<()> {
    if state.clusters.k() == 1 {
        return Ok(());
    }
    for _ in 0..cfg.max_outer_iters {
        let assigned = update_clusters(&problem.x, &state.b, &state.clusters)?;
        let changed = assigned.assignment() != state.clusters.assignment();
        let clusters = update_centroids(&state.b, &assigned)?;
        let objective = problem.objective(&state.b, &clusters, hp)?.total;
        if objective.is_nan() || objective > state.objective {
            trace.rejected += 1;
            return Ok(());
        }
        let decrease = state.objective - objective;
        state.clusters = clusters;
        state.objective = objective;
        trace.values.push(objective);
        if !changed || decrease < cfg.tol {
            return Ok(());
        }
    }
    Ok(())
}

/// Fits the penalized rank regression for one hyperparameter triple.
pub fn fit(d: &Dataset, hp: &Hyperparams, cfg: &SolverConfig) -> Result<FitResult> {
    hp.validate_for(d.q())?;
    cfg.validate()?;

    let xc = center_columns(d.x());
    let yc = center_columns(d.y());
    let problem = Problem::new(&xc, &yc)?;

    let b0 = ridge_start(&xc, &yc);
    let clusters = kmeans_init(&xc, &b0, hp.k, cfg.seed)?;
    let mut state = MMState::at(&problem, b0, clusters, hp.epsilon, cfg)?;
    state.objective = problem.objective(&state.b, &state.clusters, hp)?.total;

    let mut trace = Trace {
        values: vec![state.objective],
        inner_iters: 0,
        rejected: 0,
    };
    let mut outer_iters = 0;
    let mut converged = false;
    while outer_iters < cfg.max_outer_iters {
        outer_iters += 1;
        let start = trace.last();
        let inner_done = inner_loop(&problem, &mut state, hp, cfg, &mut trace)?;
        cluster_loop(&problem, &mut state, hp, cfg, &mut trace)?;
        if inner_done && start - trace.last() < cfg.tol {
            converged = true;
            break;
        }
    }

    let intercepts = intercepts(d.x(), d.y(), &state.b);
    Ok(FitResult {
        b: state.b,
        intercepts,
        clusters: state.clusters,
        hyperparams: *hp,
        objective_trace: trace.values,
        inner_iters: trace.inner_iters,
        outer_iters,
        rejected_sweeps: trace.rejected,
        converged,
    })
}

/// Median over samples of y_is - x_i . beta_s, per response.
pub fn intercepts(x: &DMatrix<f64>, y: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    let resid = y - x * b;
    DVector::from_fn(b.ncols(), |s, _| {
        let col: Vec<f64> = resid.column(s).iter().copied().collect();
        median(&col)
    })
}

/// x_new B plus the intercept of each response.
pub fn predict(
    b: &DMatrix<f64>,
    intercepts: &DVector<f64>,
    x_new: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_dims("covariate columns against coefficient rows", b.nrows(), x_new.ncols())?;
    check_dims("intercepts against responses", b.ncols(), intercepts.len())?;
    let mut out = x_new * b;
    for (s, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(intercepts[s]);
    }
    Ok(out)
}

impl FitResult {
    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        predict(&self.b, &self.intercepts, x_new)
    }
}
