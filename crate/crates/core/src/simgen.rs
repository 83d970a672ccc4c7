//! Synthetic multi-response studies: correlated Gaussian covariates, block
//! coefficient matrices with three groups of three similar responses, and four
//! error laws ranging from Gaussian to Cauchy.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Result, WmcenError};
use crate::solver::fit;
use crate::stats::{mean_sd, median};
use crate::tuning::{grid_search, lambda_max, log_grid, Criterion, TuningGrid};
use crate::types::{validate_dataset, Dataset, Hyperparams, SolverConfig};

pub const N_RESPONSES: usize = 9;
pub const N_TRAIN: usize = 50;
pub const N_TEST: usize = 1000;
const CORRELATION: f64 = 0.7;
const CORRELATED_BLOCK: usize = 12;

/// Error law of the response noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    /// N(0, 1).
    Normal,
    /// 0.95 N(0, 1) + 0.05 N(0, 100).
    Mixture,
    /// sqrt(2) t(4).
    T4,
    /// Cauchy(0, 1).
    Cauchy,
}

impl ErrorKind {
    /// 1-based label used on the command line and in tables.
    pub fn number(&self) -> u8 {
        match self {
            ErrorKind::Normal => 1,
            ErrorKind::Mixture => 2,
            ErrorKind::T4 => 3,
            ErrorKind::Cauchy => 4,
        }
    }
}

impl FromStr for ErrorKind {
    type Err = WmcenError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "normal" => Ok(ErrorKind::Normal),
            "2" | "mixture" => Ok(ErrorKind::Mixture),
            "3" | "t4" => Ok(ErrorKind::T4),
            "4" | "cauchy" => Ok(ErrorKind::Cauchy),
            other => Err(WmcenError::InvalidParameter(format!(
                "unknown error kind '{other}', expected 1-4 or normal, mixture, t4, cauchy"
            ))),
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// One cell of the simulation design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub p: usize,
    pub eta: f64,
    pub xi: f64,
    pub error_kind: ErrorKind,
    pub n_train: usize,
    pub n_test: usize,
    pub reps: usize,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn new(p: usize, eta: f64, xi: f64, error_kind: ErrorKind, reps: usize, seed: u64) -> Self {
        SimulationSpec {
            p,
            eta,
            xi,
            error_kind,
            n_train: N_TRAIN,
            n_test: N_TEST,
            reps,
            seed,
        }
    }

    /// Rejects p outside {12, 100}. Values of eta and xi outside the design
    /// sets {0.25, 0.5, 0.75, 1} and {0.02, 0.05, 0.1} are accepted with a
    /// warning.
    pub fn validate(&self) -> Result<()> {
        block_rows(self.p)?;
        if self.reps == 0 {
            return Err(WmcenError::InvalidParameter("reps must be at least 1".into()));
        }
        if self.n_train < 2 || self.n_test == 0 {
            return Err(WmcenError::InvalidParameter(
                "need at least 2 training and 1 test sample".into(),
            ));
        }
        if !self.eta.is_finite() || !self.xi.is_finite() {
            return Err(WmcenError::InvalidParameter("eta and xi must be finite".into()));
        }
        if ![0.25, 0.5, 0.75, 1.0].contains(&self.eta) {
            log::warn!("eta = {} is outside the design set", self.eta);
        }
        if ![0.02, 0.05, 0.1].contains(&self.xi) {
            log::warn!("xi = {} is outside the design set", self.xi);
        }
        Ok(())
    }
}

fn block_rows(p: usize) -> Result<usize> {
    match p {
        12 => Ok(4),
        100 => Ok(10),
        _ => Err(WmcenError::InvalidParameter(format!(
            "p = {p} is not supported, expected 12 or 100"
        ))),
    }
}

/// Unit diagonal with 0.7 between the first twelve covariates; for p = 100 the
/// remaining 88 are independent.
pub fn build_covariance(p: usize) -> Result<DMatrix<f64>> {
    block_rows(p)?;
    Ok(DMatrix::from_fn(p, p, |a, b| {
        if a == b {
            1.0
        } else if a < CORRELATED_BLOCK && b < CORRELATED_BLOCK {
            CORRELATION
        } else {
            0.0
        }
    }))
}

/// p x 9 matrix with three diagonal blocks of K rows, K = 4 for p = 12 and
/// K = 10 for p = 100; each block has constant columns eta - xi, eta, eta + xi.
pub fn build_true_coefficients(p: usize, eta: f64, xi: f64) -> Result<DMatrix<f64>> {
    let k = block_rows(p)?;
    let mut b = DMatrix::zeros(p, N_RESPONSES);
    for block in 0..3 {
        for (j, value) in [eta - xi, eta, eta + xi].into_iter().enumerate() {
            for h in 0..k {
                b[(block * k + h, block * 3 + j)] = value;
            }
        }
    }
    Ok(b)
}

/// n x q matrix of i.i.d. draws from `kind`.
pub fn sample_errors<R: Rng + ?Sized>(kind: ErrorKind, n: usize, q: usize, rng: &mut R) -> DMatrix<f64> {
    let t4 = StudentT::new(4.0).expect("valid degrees of freedom");
    let cauchy = Cauchy::new(0.0, 1.0).expect("valid scale");
    let mut draw = || -> f64 {
        match kind {
            ErrorKind::Normal => rng.sample(StandardNormal),
            ErrorKind::Mixture => {
                let sd = if rng.random::<f64>() < 0.05 { 10.0 } else { 1.0 };
                sd * rng.sample::<f64, _>(StandardNormal)
            }
            ErrorKind::T4 => std::f64::consts::SQRT_2 * t4.sample(rng),
            ErrorKind::Cauchy => cauchy.sample(rng),
        }
    };
    // row-major draw order so that the first rows do not depend on q
    let mut e = DMatrix::zeros(n, q);
    for i in 0..n {
        for s in 0..q {
            e[(i, s)] = draw();
        }
    }
    e
}

/// n rows drawn from N(0, sigma) as Z L^T with sigma = L L^T.
pub fn sample_covariates<R: Rng + ?Sized>(chol_l: &DMatrix<f64>, n: usize, rng: &mut R) -> DMatrix<f64> {
    let p = chol_l.nrows();
    let mut z = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        for h in 0..p {
            z[(i, h)] = rng.sample(StandardNormal);
        }
    }
    z * chol_l.transpose()
}

/// Random-number purposes within one replication; each gets its own stream.
#[derive(Debug, Clone, Copy)]
enum Purpose {
    TrainX = 0,
    TrainErrors = 1,
    TestX = 2,
    TestErrors = 3,
    Tuning = 4,
}

const PURPOSES: u64 = 5;

fn stream(seed: u64, rep: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64 * PURPOSES + purpose as u64);
    rng
}

/// Training and test data of one replication with the coefficients used.
#[derive(Debug, Clone)]
pub struct Replication {
    pub train: Dataset,
    pub test: Dataset,
    pub b_true: DMatrix<f64>,
}

/// Draws replication `rep` of `spec`. Training covariates, training errors,
/// test covariates and test errors come from separate streams of a ChaCha8
/// generator seeded with `spec.seed`.
pub fn generate_dataset(spec: &SimulationSpec, rep: usize) -> Result<Replication> {
    spec.validate()?;
    let sigma = build_covariance(spec.p)?;
    let chol = Cholesky::new(sigma).ok_or_else(|| {
        WmcenError::InvalidParameter("covariance is not positive definite".into())
    })?;
    let l = chol.l();
    let b_true = build_true_coefficients(spec.p, spec.eta, spec.xi)?;
    let make = |n: usize, xp: Purpose, ep: Purpose| -> Result<Dataset> {
        let x = sample_covariates(&l, n, &mut stream(spec.seed, rep, xp));
        let e = sample_errors(spec.error_kind, n, N_RESPONSES, &mut stream(spec.seed, rep, ep));
        let y = &x * &b_true + e;
        validate_dataset(x, y)
    };
    Ok(Replication {
        train: make(spec.n_train, Purpose::TrainX, Purpose::TrainErrors)?,
        test: make(spec.n_test, Purpose::TestX, Purpose::TestErrors)?,
        b_true,
    })
}

/// Median over all cells of |y_true - y_pred|.
pub fn median_ape(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>) -> Result<f64> {
    check_dims("prediction rows", y_true.nrows(), y_pred.nrows())?;
    check_dims("prediction columns", y_true.ncols(), y_pred.ncols())?;
    let abs: Vec<f64> = y_true.iter().zip(y_pred.iter()).map(|(a, b)| (a - b).abs()).collect();
    Ok(median(&abs))
}

/// (1 / (p q)) sum_s ||beta_hat_s - beta_true_s||^2.
pub fn mse_beta(b_hat: &DMatrix<f64>, b_true: &DMatrix<f64>) -> Result<f64> {
    check_dims("coefficient rows", b_true.nrows(), b_hat.nrows())?;
    check_dims("coefficient columns", b_true.ncols(), b_hat.ncols())?;
    Ok((b_hat - b_true).norm_squared() / b_true.len() as f64)
}

/// Fitting method compared in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Full model, tuned over lambda, gamma and k.
    Wmcen,
    /// gamma = 0 and k = 1: a Wilcoxon lasso with one lambda for all responses.
    WilcoxonLasso,
}

impl FromStr for Method {
    type Err = WmcenError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wmcen" => Ok(Method::Wmcen),
            "wlasso" | "wilcoxon-lasso" => Ok(Method::WilcoxonLasso),
            other => Err(WmcenError::InvalidParameter(format!(
                "unknown method '{other}', expected wmcen or wlasso"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Wmcen => "wmcen",
            Method::WilcoxonLasso => "wlasso",
        })
    }
}

/// Candidate grids for the per-replication cross-validation, as multiples of
/// the data-dependent lambda_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyGrid {
    pub lambda_factors: Vec<f64>,
    pub gamma_factors: Vec<f64>,
    pub ks: Vec<usize>,
    pub folds: usize,
    pub criterion: Criterion,
}

impl StudyGrid {
    /// Ten log-spaced factors in [1e-3, 10] for both lambda and gamma, k in {2, 3}.
    pub fn full() -> Self {
        let factors = log_grid(1.0, 1e-3, 10.0, 10);
        StudyGrid {
            lambda_factors: factors.clone(),
            gamma_factors: factors,
            ks: vec![2, 3],
            folds: 5,
            criterion: Criterion::MedianApe,
        }
    }

    /// Twelve candidates sized for single-core desk runs: lambda factors
    /// {0.03, 0.1, 0.3}, gamma factors {0.03, 0.3}, k in {2, 3}.
    pub fn compact() -> Self {
        StudyGrid {
            lambda_factors: vec![0.03, 0.1, 0.3],
            gamma_factors: vec![0.03, 0.3],
            ks: vec![2, 3],
            folds: 5,
            criterion: Criterion::MedianApe,
        }
    }

    /// The same lambda factors with gamma = 0 and k = 1.
    pub fn for_method(&self, method: Method) -> StudyGrid {
        match method {
            Method::Wmcen => self.clone(),
            Method::WilcoxonLasso => StudyGrid {
                gamma_factors: vec![0.0],
                ks: vec![1],
                ..self.clone()
            },
        }
    }
}

/// Metrics and tuned hyperparameters of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub hyperparams: Hyperparams,
    pub median_ape: f64,
    pub mse_beta: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ape_mean: f64,
    pub ape_sd: f64,
    pub mse_mean: f64,
    pub mse_sd: f64,
}

impl Summary {
    /// Mean and sample sd of each metric, in replication order.
    pub fn from_outcomes(per_rep: &[RepOutcome]) -> Summary {
        let ape: Vec<f64> = per_rep.iter().map(|r| r.median_ape).collect();
        let mse: Vec<f64> = per_rep.iter().map(|r| r.mse_beta).collect();
        let (ape_mean, ape_sd) = mean_sd(&ape);
        let (mse_mean, mse_sd) = mean_sd(&mse);
        Summary {
            ape_mean,
            ape_sd,
            mse_mean,
            mse_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub spec: SimulationSpec,
    pub method: Method,
    /// Successful replications sorted by index.
    pub per_rep: Vec<RepOutcome>,
    /// (replication, message) of failed replications.
    pub failures: Vec<(usize, String)>,
    pub summary: Summary,
}

/// Tunes, fits and evaluates one replication.
pub fn run_replication(
    spec: &SimulationSpec,
    rep: usize,
    method: Method,
    grid: &StudyGrid,
    cfg: &SolverConfig,
) -> Result<RepOutcome> {
    let data = generate_dataset(spec, rep)?;
    let grid = grid.for_method(method);
    let lmax = lambda_max(&data.train, cfg)?;
    let tuning_seed: u64 = stream(spec.seed, rep, Purpose::Tuning).random();
    let tuning = TuningGrid {
        lambdas: grid.lambda_factors.iter().map(|f| f * lmax).collect(),
        gammas: grid.gamma_factors.iter().map(|f| f * lmax).collect(),
        ks: grid.ks.clone(),
        folds: grid.folds,
        criterion: grid.criterion,
        seed: tuning_seed,
        epsilon: Hyperparams::DEFAULT_EPSILON,
    };
    let (hp, _) = grid_search(&data.train, &tuning, cfg)?;
    let result = fit(&data.train, &hp, cfg)?;
    let y_hat = result.predict(data.test.x())?;
    Ok(RepOutcome {
        rep,
        hyperparams: hp,
        median_ape: median_ape(data.test.y(), &y_hat)?,
        mse_beta: mse_beta(&result.b, &data.b_true)?,
        converged: result.converged,
    })
}

/// Runs every replication of `spec` with `method`. Replications run in
/// parallel and are reduced in index order, so the result does not depend on
/// scheduling. Failed replications are listed and left out of the summary.
pub fn run_study(
    spec: &SimulationSpec,
    method: Method,
    grid: &StudyGrid,
    cfg: &SolverConfig,
) -> Result<StudyResult> {
    spec.validate()?;
    let outcomes: Vec<(usize, Result<RepOutcome>)> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| (rep, run_replication(spec, rep, method, grid, cfg)))
        .collect();
    let mut per_rep = Vec::with_capacity(spec.reps);
    let mut failures = Vec::new();
    for (rep, outcome) in outcomes {
        match outcome {
            Ok(o) => per_rep.push(o),
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                failures.push((rep, e.to_string()));
            }
        }
    }
    let summary = Summary::from_outcomes(&per_rep);
    Ok(StudyResult {
        spec: *spec,
        method,
        per_rep,
        failures,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_layout() {
        let s = build_covariance(12).unwrap();
        assert_eq!(s[(0, 1)], 0.7);
        assert_eq!(s[(2, 2)], 1.0);
        let s = build_covariance(100).unwrap();
        assert_eq!(s[(12, 13)], 0.0);
        assert_eq!(s[(49, 49)], 1.0);
        assert_eq!(s[(3, 11)], 0.7);
        assert!(Cholesky::new(s).is_some());
        assert!(build_covariance(13).is_err());
    }

    #[test]
    fn coefficient_blocks() {
        let b = build_true_coefficients(12, 0.25, 0.02).unwrap();
        for h in 0..4 {
            assert_eq!(b[(h, 0)], 0.23);
            assert_eq!(b[(h, 1)], 0.25);
            assert_eq!(b[(h, 2)], 0.27);
        }
        for h in 4..12 {
            assert_eq!(b[(h, 0)], 0.0);
        }
        assert_eq!(b[(4, 3)], 0.23);
        assert_eq!(b[(11, 8)], 0.27);
        assert!((b.column(4).sum() - 4.0 * 0.25).abs() < 1e-15);

        let b = build_true_coefficients(100, 1.0, 0.1).unwrap();
        assert_eq!(b.rows(30, 70).amax(), 0.0);
        assert!((b.column(1).sum() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn metrics() {
        let y = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        assert_eq!(median_ape(&y, &DMatrix::zeros(1, 3)).unwrap(), 2.0);
        assert_eq!(median_ape(&y, &y).unwrap(), 0.0);
        let y4 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 10.0]);
        assert_eq!(median_ape(&y4, &DMatrix::zeros(2, 2)).unwrap(), 2.5);
        assert!(median_ape(&y4, &DMatrix::zeros(2, 3)).is_err());

        let t = DMatrix::zeros(2, 3);
        let mut h = t.clone();
        h[(1, 2)] = 3.0;
        assert_eq!(mse_beta(&h, &t).unwrap(), 1.5);
        assert_eq!(mse_beta(&(&h * 2.0), &t).unwrap(), 6.0);
    }

    #[test]
    fn error_kind_labels() {
        assert_eq!("4".parse::<ErrorKind>().unwrap(), ErrorKind::Cauchy);
        assert_eq!("Mixture".parse::<ErrorKind>().unwrap(), ErrorKind::Mixture);
        assert_eq!(ErrorKind::T4.to_string(), "3");
        assert!("5".parse::<ErrorKind>().is_err());
    }

    #[test]
    fn replication_is_deterministic_and_streams_differ() {
        let spec = SimulationSpec::new(12, 0.25, 0.02, ErrorKind::Normal, 2, 7);
        let a = generate_dataset(&spec, 0).unwrap();
        let b = generate_dataset(&spec, 0).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = generate_dataset(&spec, 1).unwrap();
        assert_ne!(a.train, c.train);
        assert_ne!(a.train.x().rows(0, 50), a.test.x().rows(0, 50));
        assert_eq!(a.train.n(), 50);
        assert_eq!(a.test.n(), 1000);
    }

    #[test]
    fn zero_signal_gives_pure_noise() {
        let spec = SimulationSpec::new(12, 0.0, 0.0, ErrorKind::Normal, 1, 3);
        let r = generate_dataset(&spec, 0).unwrap();
        let e = sample_errors(ErrorKind::Normal, 50, 9, &mut stream(3, 0, Purpose::TrainErrors));
        assert_eq!(r.train.y(), &e);
    }
}
