//! Brute-force reference computations for tiny problems. Everything here is
//! evaluated with plain loops over the raw inputs so that agreement with the
//! solver is evidence rather than a restatement of the same code.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{check_dims, Result, WmcenError};
use crate::pairwise::PairwiseSystem;
use crate::types::{ClusterState, Hyperparams};

const MAX_GRID_POINTS: u128 = 10_000_000;
const MAX_CLUSTER_CELLS: usize = 20;

/// Axis-aligned grid shared by every coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn new(lower: f64, upper: f64, step: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || lower >= upper || step.is_nan() || step <= 0.0 {
            return Err(WmcenError::InvalidParameter(format!(
                "grid needs lower < upper and step > 0, got [{lower}, {upper}] step {step}"
            )));
        }
        Ok(GridSpec { lower, upper, step })
    }

    /// Grid values along one axis, endpoints included.
    pub fn axis(&self) -> Vec<f64> {
        let count = ((self.upper - self.lower) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.lower + i as f64 * self.step).collect()
    }

    fn points(&self, dims: usize) -> u128 {
        (self.axis().len() as u128).saturating_pow(dims as u32)
    }
}

/// Objective evaluated term by term from the pairwise differences.
fn reference_objective(
    ps: &PairwiseSystem,
    x: &DMatrix<f64>,
    b: &[f64],
    p: usize,
    cs: &ClusterState,
    hp: &Hyperparams,
) -> f64 {
    let (m, q, n) = (ps.r.nrows(), ps.g.ncols(), x.nrows());
    let mut loss = 0.0;
    for s in 0..q {
        for o in 0..m {
            let mut fit = 0.0;
            for h in 0..p {
                fit += ps.r[(o, h)] * b[s * p + h];
            }
            loss += (ps.g[(o, s)] - fit).abs();
        }
    }
    let mut pen = 0.0;
    for &beta in b {
        let a = beta.abs();
        pen += a - hp.epsilon * (1.0 + a / hp.epsilon).ln();
    }
    let mut clus = 0.0;
    if hp.gamma != 0.0 {
        let v = cs.centroids();
        for s in 0..q {
            let l = cs.cluster_of(s);
            for i in 0..n {
                let mut d = 0.0;
                for h in 0..p {
                    d += x[(i, h)] * (b[s * p + h] - v[(h, l)]);
                }
                clus += d * d;
            }
        }
    }
    loss + hp.lambda * pen + 0.5 * hp.gamma * clus
}

/// Exhaustive minimization of the objective over a grid with the cluster
/// state held fixed. Returns the p x q argmin (first one in lexicographic
/// grid order on ties) and its value.
pub fn grid_minimize_l_dagger(
    ps: &PairwiseSystem,
    x: &DMatrix<f64>,
    hp: &Hyperparams,
    cs_fixed: &ClusterState,
    grid: &GridSpec,
) -> Result<(DMatrix<f64>, f64)> {
    let (p, q) = (ps.r.ncols(), ps.g.ncols());
    check_dims("covariates against pairwise system", p, x.ncols())?;
    check_dims("cluster assignment against responses", q, cs_fixed.q())?;
    check_dims("centroid rows against covariates", p, cs_fixed.centroids().nrows())?;
    let dims = p * q;
    let points = grid.points(dims);
    if points > MAX_GRID_POINTS {
        return Err(WmcenError::GridTooLarge {
            points,
            limit: MAX_GRID_POINTS,
        });
    }
    let axis = grid.axis();
    let len = axis.len();
    // partition on the first coordinate, then reduce by (value, index)
    let best = (0..len)
        .into_par_iter()
        .map(|first| {
            let mut idx = vec![0usize; dims];
            idx[0] = first;
            let mut coef = vec![0.0; dims];
            let mut best: Option<(f64, Vec<f64>)> = None;
            loop {
                for (c, &i) in coef.iter_mut().zip(&idx) {
                    *c = axis[i];
                }
                let val = reference_objective(ps, x, &coef, p, cs_fixed, hp);
                if best.as_ref().is_none_or(|(b, _)| val < *b) {
                    best = Some((val, coef.clone()));
                }
                // odometer over the remaining coordinates
                let mut pos = dims;
                loop {
                    pos -= 1;
                    if pos == 0 {
                        return (first, best.expect("at least one point"));
                    }
                    idx[pos] += 1;
                    if idx[pos] < len {
                        break;
                    }
                    idx[pos] = 0;
                }
            }
        })
        .reduce_with(|a, b| {
            if b.1 .0 < a.1 .0 || (b.1 .0 == a.1 .0 && b.0 < a.0) {
                b
            } else {
                a
            }
        })
        .expect("axis is non-empty");
    let (_, (value, coef)) = best;
    Ok((DMatrix::from_column_slice(p, q, &coef), value))
}

/// q x k binary matrix assigning each column of `b` to the candidate centroid
/// with the smallest ||X beta_s - X v_l||^2, ties to the lowest index. No
/// empty-cluster handling.
pub fn exhaustive_cluster_check(
    x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    v_candidates: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (n, p, q, k) = (x.nrows(), x.ncols(), b.ncols(), v_candidates.ncols());
    check_dims("coefficient rows against covariates", p, b.nrows())?;
    check_dims("centroid rows against covariates", p, v_candidates.nrows())?;
    if q * k > MAX_CLUSTER_CELLS {
        return Err(WmcenError::InvalidParameter(format!(
            "exhaustive check limited to q*k <= {MAX_CLUSTER_CELLS}, got {}",
            q * k
        )));
    }
    let mut u = DMatrix::zeros(q, k);
    for s in 0..q {
        let mut best = (f64::INFINITY, 0);
        for l in 0..k {
            let mut dist = 0.0;
            for i in 0..n {
                let mut d = 0.0;
                for h in 0..p {
                    d += x[(i, h)] * (b[(h, s)] - v_candidates[(h, l)]);
                }
                dist += d * d;
            }
            if dist < best.0 {
                best = (dist, l);
            }
        }
        u[(s, best.1)] = 1.0;
    }
    Ok(u)
}
