//! Pairwise-difference system: the Wilcoxon dispersion of a linear model is an
//! L1 regression of response differences on covariate differences.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, WmcenError};
use crate::types::Dataset;

/// Row differences over all pairs i < j in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseSystem {
    /// m x p, row o = x_i - x_j.
    pub r: DMatrix<f64>,
    /// m x q, entry (o, s) = y_is - y_js.
    pub g: DMatrix<f64>,
    pub pair_index: Vec<(usize, usize)>,
}

impl PairwiseSystem {
    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    pub fn p(&self) -> usize {
        self.r.ncols()
    }

    pub fn q(&self) -> usize {
        self.g.ncols()
    }

    /// Residual differences g_s - R beta_s for one response.
    pub fn residual_differences(&self, s: usize, beta: &DVector<f64>) -> DVector<f64> {
        let mut out = self.g.column(s).into_owned();
        out.gemv(-1.0, &self.r, beta, 1.0);
        out
    }
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

pub fn build_pairwise(d: &Dataset) -> Result<PairwiseSystem> {
    pairwise_from_matrices(d.x(), d.y())
}

pub(crate) fn pairwise_from_matrices(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<PairwiseSystem> {
    let n = x.nrows();
    if n < 2 {
        return Err(WmcenError::TooFewSamples(n));
    }
    let m = pair_count(n);
    let (p, q) = (x.ncols(), y.ncols());
    let mut pair_index = Vec::with_capacity(m);
    for i in 0..n {
        for j in (i + 1)..n {
            pair_index.push((i, j));
        }
    }
    let r = DMatrix::from_fn(m, p, |o, h| {
        let (i, j) = pair_index[o];
        x[(i, h)] - x[(j, h)]
    });
    let g = DMatrix::from_fn(m, q, |o, s| {
        let (i, j) = pair_index[o];
        y[(i, s)] - y[(j, s)]
    });
    Ok(PairwiseSystem { r, g, pair_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::validate_dataset;
    use proptest::prelude::*;

    fn dataset(x: &[f64], p: usize, y: &[f64], q: usize) -> Dataset {
        let n = x.len() / p;
        validate_dataset(
            DMatrix::from_row_slice(n, p, x),
            DMatrix::from_row_slice(n, q, y),
        )
        .unwrap()
    }

    #[test]
    fn direct_subtraction() {
        let d = dataset(&[1.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2, &[2.0, 2.0, 2.0], 1);
        let ps = build_pairwise(&d).unwrap();
        let expected = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 0.0, -1.0, -1.0, 0.0]);
        assert_eq!(ps.r, expected);
        assert_eq!(ps.g, DMatrix::zeros(3, 1));
        assert_eq!(ps.pair_index, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn pair_count_for_five_rows() {
        let d = dataset(&[0.0, 1.0, 2.0, 3.0, 4.0], 1, &[1.0, 0.0, 2.0, 1.0, 5.0], 1);
        let ps = build_pairwise(&d).unwrap();
        assert_eq!(ps.m(), 10);
        assert_eq!(*ps.pair_index.last().unwrap(), (3, 4));
    }

    proptest! {
        #[test]
        fn residual_differences_match_residuals(
            n in 2usize..8,
            p in 1usize..4,
            seed in proptest::collection::vec(-5.0f64..5.0, 64),
            shift in -10.0f64..10.0,
        ) {
            let x = DMatrix::from_fn(n, p, |i, h| seed[(i * p + h) % 64]);
            let y = DMatrix::from_fn(n, 1, |i, _| seed[(i * 7 + 3) % 64] * 1.3);
            let beta = DVector::from_fn(p, |h, _| seed[(h * 11 + 5) % 64] * 0.5);
            let ps = pairwise_from_matrices(&x, &y).unwrap();
            let e = y.column(0) - &x * &beta;
            let diff = ps.residual_differences(0, &beta);
            for (o, &(i, j)) in ps.pair_index.iter().enumerate() {
                prop_assert!((diff[o] - (e[i] - e[j])).abs() <= 1e-12 * (1.0 + e[i].abs() + e[j].abs()));
            }
            // location invariance
            let ps2 = pairwise_from_matrices(&x, &y.add_scalar(shift)).unwrap();
            for o in 0..ps.m() {
                prop_assert!((ps.g[(o, 0)] - ps2.g[(o, 0)]).abs() <= 1e-12 * (1.0 + shift.abs()));
            }
        }
    }
}
