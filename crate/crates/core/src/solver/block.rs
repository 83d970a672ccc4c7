//! Auxiliary-variable updates and the per-response block solve.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{MMState, Problem};
use crate::error::{check_dims, Result, WmcenError};
use crate::pairwise::PairwiseSystem;
use crate::types::{Hyperparams, SolverConfig};

/// w_os = 1 / (2 max(|g_os - r_o . beta_s|, delta)).
pub fn update_weights(
    ps: &PairwiseSystem,
    b: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<DMatrix<f64>> {
    check_dims("coefficient rows against covariates", ps.p(), b.nrows())?;
    check_dims("coefficient columns against responses", ps.q(), b.ncols())?;
    let mut w = ps.g.clone();
    w.gemm(-1.0, &ps.r, b, 1.0);
    let delta = cfg.weight_clamp_delta;
    w.apply(|u| *u = 0.5 / u.abs().max(delta));
    Ok(w)
}

pub(crate) fn weights_for(
    ps: &PairwiseSystem,
    s: usize,
    beta: &DVector<f64>,
    delta: f64,
) -> DVector<f64> {
    let mut w = ps.residual_differences(s, beta);
    w.apply(|u| *u = 0.5 / u.abs().max(delta));
    w
}

/// Diagonal of Psi_s for every response: 1 / sqrt(2 (|beta_sh| + eps)).
pub fn update_psi(b: &DMatrix<f64>, epsilon: f64) -> DMatrix<f64> {
    b.map(|beta| 1.0 / (2.0 * (beta.abs() + epsilon)).sqrt())
}

/// Minimizes the surrogate over column `d` with every other column held at its
/// current value and the centroids profiled out as cluster means.
pub fn update_beta_block(
    d: usize,
    problem: &Problem,
    state: &MMState,
    hp: &Hyperparams,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    let ps = &problem.ps;
    let p = ps.p();
    let w = state.w.column(d);

    // 2 sum_o w_od r_o r_o^T, built from sqrt(w)-scaled rows
    let mut scaled = ps.r.clone();
    for mut col in scaled.column_iter_mut() {
        for (v, wi) in col.iter_mut().zip(w.iter()) {
            *v *= wi.sqrt();
        }
    }
    let mut a = scaled.tr_mul(&scaled);
    a *= 2.0;

    let wg = w.component_mul(&ps.g.column(d));
    let mut rhs = ps.r.tr_mul(&wg);
    rhs *= 2.0;

    for h in 0..p {
        let psi = state.psi[(h, d)];
        a[(h, h)] += 2.0 * hp.lambda * psi * psi;
    }

    if hp.gamma != 0.0 {
        let l = state.clusters.cluster_of(d);
        let size = state.clusters.counts()[l];
        if size == 0 {
            return Err(WmcenError::EmptyCluster(l));
        }
        let share = hp.gamma / size as f64;
        let own = hp.gamma - share;
        if own != 0.0 {
            a += &problem.xtx * own;
        }
        let mut others = DVector::zeros(p);
        let mut any = false;
        for (m, &lm) in state.clusters.assignment().iter().enumerate() {
            if m != d && lm == l {
                others += state.b.column(m);
                any = true;
            }
        }
        if any {
            rhs += &problem.xtx * others * share;
        }
    }

    solve_spd(a, &rhs, cfg.ridge_jitter).ok_or(WmcenError::SingularSystem { response: d })
}

/// Cholesky solve; on failure retries once with `jitter * trace / p` on the diagonal.
pub(crate) fn solve_spd(a: DMatrix<f64>, rhs: &DVector<f64>, jitter: f64) -> Option<DVector<f64>> {
    if let Some(chol) = Cholesky::new(a.clone()) {
        let x = chol.solve(rhs);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    let p = a.nrows();
    let scale = (a.trace() / p as f64).abs().max(f64::MIN_POSITIVE);
    let mut a = a;
    for h in 0..p {
        a[(h, h)] += jitter * scale;
    }
    let x = Cholesky::new(a)?.solve(rhs);
    x.iter().all(|v| v.is_finite()).then_some(x)
}
