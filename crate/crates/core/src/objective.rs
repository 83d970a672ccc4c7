//! Scalar functions of the penalized rank objective and its quadratic majorizer.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dims, Result, WmcenError};
use crate::pairwise::PairwiseSystem;
use crate::solver::{update_psi, update_weights};
use crate::types::{ClusterState, Hyperparams, SolverConfig};

/// The three addends of the perturbed objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveBreakdown {
    pub loss: f64,
    pub penalty_l1: f64,
    pub penalty_cluster: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    fn new(loss: f64, penalty_l1: f64, penalty_cluster: f64) -> Self {
        ObjectiveBreakdown {
            loss,
            penalty_l1,
            penalty_cluster,
            total: loss + penalty_l1 + penalty_cluster,
        }
    }
}

fn check_coefficients(ps: &PairwiseSystem, b: &DMatrix<f64>) -> Result<()> {
    check_dims("coefficient rows against covariates", ps.p(), b.nrows())?;
    check_dims("coefficient columns against responses", ps.q(), b.ncols())
}

/// Sum over responses and pairs of |g_os - r_o . beta_s|.
pub fn wilcoxon_dispersion(ps: &PairwiseSystem, b: &DMatrix<f64>) -> Result<f64> {
    check_coefficients(ps, b)?;
    let mut fitted = ps.g.clone();
    fitted.gemm(-1.0, &ps.r, b, 1.0);
    Ok(fitted.iter().map(|v| v.abs()).sum())
}

/// Sum over i < j of |e_i - e_j| for a single residual vector.
pub fn pairwise_dispersion(residuals: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, ei) in residuals.iter().enumerate() {
        for ej in &residuals[i + 1..] {
            total += (ei - ej).abs();
        }
    }
    total
}

/// Ranks 1..=n, ties receive the average of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Jaeckel's rank form sqrt(12) * sum_i (R(e_i)/(n+1) - 1/2) e_i.
pub fn jaeckel_dispersion(residuals: &[f64]) -> Result<f64> {
    let n = residuals.len();
    if n < 2 {
        return Err(WmcenError::TooFewSamples(n));
    }
    let ranks = average_ranks(residuals);
    let denom = (n + 1) as f64;
    let sum: f64 = ranks
        .iter()
        .zip(residuals)
        .map(|(r, e)| (r / denom - 0.5) * e)
        .sum();
    Ok(12f64.sqrt() * sum)
}

/// |b| - eps * log(1 + |b| / eps), the smooth surrogate of |b|.
pub fn perturbed_abs(beta: f64, epsilon: f64) -> f64 {
    let a = beta.abs();
    a - epsilon * (a / epsilon).ln_1p()
}

pub fn perturbed_l1(b: &DMatrix<f64>, lambda: f64, epsilon: f64) -> f64 {
    lambda * b.iter().map(|&v| perturbed_abs(v, epsilon)).sum::<f64>()
}

/// ||X beta_s - X v||^2.
pub(crate) fn fitted_distance(x: &DMatrix<f64>, beta: &DVector<f64>, v: &DVector<f64>) -> f64 {
    (x * (beta - v)).norm_squared()
}

/// (gamma / 2) sum_s ||X beta_s - X v_{l(s)}||^2.
pub fn cluster_penalty(
    x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    cs: &ClusterState,
    gamma: f64,
) -> Result<f64> {
    check_dims("coefficient rows against covariates", x.ncols(), b.nrows())?;
    check_dims("cluster assignment against responses", b.ncols(), cs.q())?;
    check_dims("centroid rows against covariates", x.ncols(), cs.centroids().nrows())?;
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in 0..b.ncols() {
        let l = cs.cluster_of(s);
        total += fitted_distance(
            x,
            &b.column(s).into_owned(),
            &cs.centroids().column(l).into_owned(),
        );
    }
    Ok(0.5 * gamma * total)
}

pub fn objective_l_dagger(
    ps: &PairwiseSystem,
    x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    cs: &ClusterState,
    hp: &Hyperparams,
) -> Result<ObjectiveBreakdown> {
    let loss = wilcoxon_dispersion(ps, b)?;
    let penalty_l1 = perturbed_l1(b, hp.lambda, hp.epsilon);
    let penalty_cluster = cluster_penalty(x, b, cs, hp.gamma)?;
    Ok(ObjectiveBreakdown::new(loss, penalty_l1, penalty_cluster))
}

/// Quadratic surrogate of the objective expanded at `b_anchor`, evaluated at `b`.
///
/// The additive constant is fixed so that the surrogate equals the objective
/// at the anchor. The cluster term is carried over exactly.
pub fn majorizer_m(
    ps: &PairwiseSystem,
    x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    b_anchor: &DMatrix<f64>,
    cs: &ClusterState,
    hp: &Hyperparams,
    cfg: &SolverConfig,
) -> Result<f64> {
    check_coefficients(ps, b)?;
    check_coefficients(ps, b_anchor)?;
    let w = update_weights(ps, b_anchor, cfg)?;
    let psi = update_psi(b_anchor, hp.epsilon);

    let mut resid = ps.g.clone();
    resid.gemm(-1.0, &ps.r, b, 1.0);
    let mut resid_anchor = ps.g.clone();
    resid_anchor.gemm(-1.0, &ps.r, b_anchor, 1.0);

    let mut quad_loss = 0.0;
    let mut constant = 0.0;
    for ((&wi, &u), &u0) in w.iter().zip(resid.iter()).zip(resid_anchor.iter()) {
        quad_loss += wi * u * u;
        constant += u0.abs() - wi * u0 * u0;
    }

    let mut quad_pen = 0.0;
    for ((&psi_i, &beta), &beta0) in psi.iter().zip(b.iter()).zip(b_anchor.iter()) {
        let c = psi_i * psi_i;
        quad_pen += c * beta * beta;
        constant += hp.lambda * (perturbed_abs(beta0, hp.epsilon) - c * beta0 * beta0);
    }

    let cluster = cluster_penalty(x, b, cs, hp.gamma)?;
    Ok(quad_loss + hp.lambda * quad_pen + constant + cluster)
}
