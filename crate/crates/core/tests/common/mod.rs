#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wmcen::{validate_dataset, Dataset};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// x ~ N(0, 1), B ~ U(-1, 1), y = x B + N(0, noise^2).
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, q: usize, noise: f64) -> (Dataset, DMatrix<f64>) {
    let x = normal_matrix(rng, n, p);
    let b = DMatrix::from_fn(p, q, |_, _| rng.random_range(-1.0..1.0));
    let e = normal_matrix(rng, n, q) * noise;
    let y = &x * &b + e;
    (validate_dataset(x, y).unwrap(), b)
}

pub fn column_centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    c
}

/// Sum over i < j of |e_i - e_j| straight from the definition.
pub fn brute_pairwise(e: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..e.len() {
        for j in (i + 1)..e.len() {
            s += (e[i] - e[j]).abs();
        }
    }
    s
}

/// Repairs empty clusters the documented way: repeatedly move the member
/// farthest from its own centroid, among clusters with at least two members,
/// into the lowest-index empty cluster.
pub fn repair_reference(assignment: &mut [usize], dist: &DMatrix<f64>, k: usize) {
    loop {
        let mut counts = vec![0; k];
        for &l in assignment.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let mut donor: Option<usize> = None;
        for s in 0..assignment.len() {
            if counts[assignment[s]] >= 2 {
                let d = dist[(s, assignment[s])];
                if donor.is_none_or(|b| d > dist[(b, assignment[b])]) {
                    donor = Some(s);
                }
            }
        }
        match donor {
            Some(s) => assignment[s] = empty,
            None => return,
        }
    }
}

/// ||X (b_s - v_l)||^2 for every (s, l).
pub fn profile_distances(x: &DMatrix<f64>, b: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(b.ncols(), v.ncols(), |s, l| (x * (b.column(s) - v.column(l))).norm_squared())
}
