//! Rank-based multivariate regression with a perturbed L1 penalty and a
//! k-means penalty that pulls the fitted profiles of related responses
//! together, fitted by a majorize-minimize algorithm.
//!
//! ```
//! use nalgebra::DMatrix;
//! use wmcen::{fit, validate_dataset, Hyperparams, SolverConfig};
//!
//! let x = DMatrix::from_fn(12, 2, |i, h| ((i * 3 + h * 5) % 7) as f64 - 3.0);
//! let y = DMatrix::from_fn(12, 2, |i, s| x[(i, 0)] * (1.0 + s as f64) - x[(i, 1)]);
//! let data = validate_dataset(x, y).unwrap();
//! let hp = Hyperparams::new(0.01, 0.5, 1, Hyperparams::DEFAULT_EPSILON).unwrap();
//! let result = fit(&data, &hp, &SolverConfig::default()).unwrap();
//! assert!((result.b[(0, 1)] - 2.0).abs() < 0.05);
//! ```

pub mod cli;
pub mod error;
pub mod io;
pub mod objective;
pub mod oracle;
pub mod pairwise;
pub mod report;
pub mod simgen;
pub mod solver;
pub mod stats;
pub mod tuning;
pub mod types;

pub use error::{Result, WmcenError};
pub use objective::{majorizer_m, objective_l_dagger, ObjectiveBreakdown};
pub use pairwise::{build_pairwise, PairwiseSystem};
pub use solver::{fit, predict};
pub use types::{validate_dataset, ClusterState, Dataset, FitResult, Hyperparams, SolverConfig};
