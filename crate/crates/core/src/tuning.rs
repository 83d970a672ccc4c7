//! K-fold cross-validation over a (lambda, gamma, k) grid.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WmcenError};
use crate::pairwise::pairwise_from_matrices;
use crate::solver::{center_columns, fit};
use crate::stats::median;
use crate::types::{Dataset, Hyperparams, SolverConfig};

/// Held-out loss used to score a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Median over held-out cells of |y - y_hat|.
    MedianApe,
    /// Mean over held-out cells of (y - y_hat)^2.
    MeanSquared,
}

impl Criterion {
    pub fn evaluate(&self, y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> f64 {
        let diffs = y.iter().zip(y_hat.iter()).map(|(a, b)| a - b);
        match self {
            Criterion::MedianApe => median(&diffs.map(f64::abs).collect::<Vec<_>>()),
            Criterion::MeanSquared => diffs.map(|d| d * d).sum::<f64>() / y.len() as f64,
        }
    }
}

impl FromStr for Criterion {
    type Err = WmcenError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median-ape" => Ok(Criterion::MedianApe),
            "mean-squared" | "mse" => Ok(Criterion::MeanSquared),
            other => Err(WmcenError::InvalidParameter(format!(
                "unknown criterion '{other}', expected median-ape or mean-squared"
            ))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::MedianApe => "median-ape",
            Criterion::MeanSquared => "mean-squared",
        })
    }
}

/// Candidate sets and fold setup for [`grid_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub ks: Vec<usize>,
    pub folds: usize,
    pub criterion: Criterion,
    pub seed: u64,
    pub epsilon: f64,
}

impl TuningGrid {
    pub fn validate(&self, n: usize, q: usize) -> Result<()> {
        if self.lambdas.is_empty() || self.gammas.is_empty() || self.ks.is_empty() {
            return Err(WmcenError::InvalidParameter(
                "tuning grid sequences must be non-empty".into(),
            ));
        }
        if self.folds < 2 || self.folds > n {
            return Err(WmcenError::InvalidParameter(format!(
                "folds = {} must lie in 2..={n}",
                self.folds
            )));
        }
        for hp in self.candidates()? {
            hp.validate_for(q)?;
        }
        Ok(())
    }

    /// Every (lambda, gamma, k) triple in lambda-major order.
    pub fn candidates(&self) -> Result<Vec<Hyperparams>> {
        let mut out = Vec::with_capacity(self.lambdas.len() * self.gammas.len() * self.ks.len());
        for &lambda in &self.lambdas {
            for &gamma in &self.gammas {
                for &k in &self.ks {
                    out.push(Hyperparams::new(lambda, gamma, k, self.epsilon)?);
                }
            }
        }
        Ok(out)
    }
}

/// One row of the score table returned by [`grid_search`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub hyperparams: Hyperparams,
    pub score: f64,
}

/// Shuffles 0..n under `seed` and cuts it into `folds` contiguous parts; the
/// first n mod folds parts get one extra index. Each part is sorted.
pub fn kfold_split(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(WmcenError::InvalidParameter(format!(
            "folds = {folds} must lie in 2..={n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let mut part = idx[start..start + size].to_vec();
        part.sort_unstable();
        out.push(part);
        start += size;
    }
    Ok(out)
}

fn complement(n: usize, held_out: &[usize]) -> Vec<usize> {
    let mut keep = vec![true; n];
    for &i in held_out {
        keep[i] = false;
    }
    (0..n).filter(|&i| keep[i]).collect()
}

fn fold_score(
    d: &Dataset,
    hp: &Hyperparams,
    cfg: &SolverConfig,
    held_out: &[usize],
    criterion: Criterion,
) -> Result<f64> {
    let train = d.subset(&complement(d.n(), held_out))?;
    let test = d.subset(held_out)?;
    let result = fit(&train, hp, cfg)?;
    let y_hat = result.predict(test.x())?;
    Ok(criterion.evaluate(test.y(), &y_hat))
}

/// Mean over folds of the held-out criterion. A failed or non-finite fold
/// makes the whole score +infinity.
pub fn cv_score(
    d: &Dataset,
    hp: &Hyperparams,
    cfg: &SolverConfig,
    folds: &[Vec<usize>],
    criterion: Criterion,
) -> f64 {
    let mut total = 0.0;
    for (f, held_out) in folds.iter().enumerate() {
        match fold_score(d, hp, cfg, held_out, criterion) {
            Ok(v) if v.is_finite() => total += v,
            Ok(v) => {
                log::warn!("fold {f} scored {v} for {hp:?}");
                return f64::INFINITY;
            }
            Err(e) => {
                log::warn!("fold {f} failed for {hp:?}: {e}");
                return f64::INFINITY;
            }
        }
    }
    total / folds.len() as f64
}

/// True when `a` should be preferred over `b` at equal score.
fn simpler(a: &Hyperparams, b: &Hyperparams) -> bool {
    (a.lambda, a.gamma, std::cmp::Reverse(a.k)) > (b.lambda, b.gamma, std::cmp::Reverse(b.k))
}

/// Scores every candidate by cross-validation and returns the best one with
/// the full score table. Ties go to larger lambda, then larger gamma, then
/// smaller k.
pub fn grid_search(
    d: &Dataset,
    grid: &TuningGrid,
    cfg: &SolverConfig,
) -> Result<(Hyperparams, Vec<CandidateScore>)> {
    grid.validate(d.n(), d.q())?;
    let folds = kfold_split(d.n(), grid.folds, grid.seed)?;
    let table: Vec<CandidateScore> = grid
        .candidates()?
        .into_par_iter()
        .map(|hp| CandidateScore {
            hyperparams: hp,
            score: cv_score(d, &hp, cfg, &folds, grid.criterion),
        })
        .collect();
    let mut best: Option<&CandidateScore> = None;
    for c in table.iter().filter(|c| c.score.is_finite()) {
        best = match best {
            None => Some(c),
            Some(b) if c.score < b.score => Some(c),
            Some(b) if c.score == b.score && simpler(&c.hyperparams, &b.hyperparams) => Some(c),
            keep => keep,
        };
    }
    let chosen = best.ok_or(WmcenError::TuningFailed)?.hyperparams;
    Ok((chosen, table))
}

/// Bound on lambda above which zero satisfies the subgradient condition of
/// the unperturbed gamma = 0 problem: max over (h, s) of |sum_o sign(g_os) r_oh|.
pub fn lambda_upper_bound(d: &Dataset) -> Result<f64> {
    let ps = pairwise_from_matrices(d.x(), d.y())?;
    let mut best: f64 = 0.0;
    for s in 0..ps.q() {
        for h in 0..ps.p() {
            let sum: f64 = (0..ps.m()).map(|o| ps.g[(o, s)].signum() * ps.r[(o, h)]).sum();
            best = best.max(sum.abs());
        }
    }
    Ok(best)
}

const ZERO_FIT_RELATIVE: f64 = 1e-3;
const BISECTION_STEPS: usize = 10;

/// Smallest lambda whose gamma = 0 fit is numerically zero, located by
/// bisection on [0, `lambda_upper_bound`]. "Zero" means every coefficient is
/// below 1e-3 times the largest ridge-start coefficient.
pub fn lambda_max(d: &Dataset, cfg: &SolverConfig) -> Result<f64> {
    let upper = lambda_upper_bound(d)?;
    if upper == 0.0 {
        return Ok(f64::MIN_POSITIVE);
    }
    let xc = center_columns(d.x());
    let yc = center_columns(d.y());
    let scale = crate::solver::ridge_start(&xc, &yc).amax().max(f64::MIN_POSITIVE);
    let is_zero = |lambda: f64| -> Result<bool> {
        let hp = Hyperparams::new(lambda, 0.0, 1, Hyperparams::DEFAULT_EPSILON)?;
        Ok(fit(d, &hp, cfg)?.b.amax() <= ZERO_FIT_RELATIVE * scale)
    };
    let (mut lo, mut hi) = (0.0, upper);
    if !is_zero(hi)? {
        return Ok(hi);
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if is_zero(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `count` log-spaced values from `lo_factor * scale` to `hi_factor * scale`.
pub fn log_grid(scale: f64, lo_factor: f64, hi_factor: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo_factor * scale];
    }
    let (a, b) = (lo_factor.ln(), hi_factor.ln());
    (0..count)
        .map(|i| scale * (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Ten log-spaced lambdas and gammas over [1e-3, 10] times `lambda_max`, and
/// k in {2, 3} capped at q.
pub fn default_grid(d: &Dataset, cfg: &SolverConfig, seed: u64) -> Result<TuningGrid> {
    let lmax = lambda_max(d, cfg)?;
    let values = log_grid(lmax, 1e-3, 10.0, 10);
    let mut ks: Vec<usize> = [2, 3].into_iter().filter(|&k| k <= d.q()).collect();
    if ks.is_empty() {
        ks.push(1);
    }
    Ok(TuningGrid {
        lambdas: values.clone(),
        gammas: values,
        ks,
        folds: 5.min(d.n()),
        criterion: Criterion::MedianApe,
        seed,
        epsilon: Hyperparams::DEFAULT_EPSILON,
    })
}
