//! k-means steps on fitted response profiles X beta_s.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dims, Result, WmcenError};
use crate::types::ClusterState;

const KMEANS_RESTARTS: usize = 10;
const LLOYD_MAX_ITERS: usize = 100;

/// Squared distances between the columns of `points` and the columns of `centers`.
fn distances(points: &DMatrix<f64>, centers: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(points.ncols(), centers.ncols(), |s, l| {
        points
            .column(s)
            .iter()
            .zip(centers.column(l).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    })
}

/// Nearest center per row of `dist`, ties to the lowest index.
fn nearest(dist: &DMatrix<f64>) -> Vec<usize> {
    (0..dist.nrows())
        .map(|s| {
            let mut best = 0;
            for l in 1..dist.ncols() {
                if dist[(s, l)] < dist[(s, best)] {
                    best = l;
                }
            }
            best
        })
        .collect()
}

/// Fills empty clusters with the member farthest from its own center, taken
/// from clusters that still keep at least one other member.
fn repair_empty(assignment: &mut [usize], dist: &DMatrix<f64>, k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in assignment.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut donor: Option<usize> = None;
        for s in 0..assignment.len() {
            if counts[assignment[s]] < 2 {
                continue;
            }
            let d = dist[(s, assignment[s])];
            if donor.is_none_or(|b| d > dist[(b, assignment[b])]) {
                donor = Some(s);
            }
        }
        match donor {
            Some(s) => assignment[s] = empty,
            // k > q; callers validate this away
            None => return,
        }
    }
}

fn member_means(values: &DMatrix<f64>, assignment: &[usize], k: usize) -> Result<DMatrix<f64>> {
    let mut sums = DMatrix::zeros(values.nrows(), k);
    let mut counts = vec![0usize; k];
    for (s, &l) in assignment.iter().enumerate() {
        let mut col = sums.column_mut(l);
        col += values.column(s);
        counts[l] += 1;
    }
    for (l, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(WmcenError::EmptyCluster(l));
        }
        let mut col = sums.column_mut(l);
        col /= c as f64;
    }
    Ok(sums)
}

/// Reassigns every response to its nearest centroid in the X beta metric.
/// Centroids are left as they were; see [`update_centroids`].
pub fn update_clusters(
    x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    clusters: &ClusterState,
) -> Result<ClusterState> {
    check_dims("coefficient rows against covariates", x.ncols(), b.nrows())?;
    check_dims("cluster assignment against responses", b.ncols(), clusters.q())?;
    let k = clusters.k();
    let fitted = x * b;
    let centers = x * clusters.centroids();
    let dist = distances(&fitted, &centers);
    let mut assignment = nearest(&dist);
    repair_empty(&mut assignment, &dist, k);
    ClusterState::new(assignment, clusters.centroids().clone())
}

/// v_l = mean of the member columns of `b`.
pub fn update_centroids(b: &DMatrix<f64>, clusters: &ClusterState) -> Result<ClusterState> {
    check_dims("cluster assignment against responses", b.ncols(), clusters.q())?;
    let v = member_means(b, clusters.assignment(), clusters.k())?;
    Ok(clusters.with_centroids(v))
}

/// Lloyd's algorithm on the columns of X b with k-means++ seeding; the best of
/// several restarts by within-cluster sum of squares is kept.
pub fn kmeans_init(x: &DMatrix<f64>, b: &DMatrix<f64>, k: usize, seed: u64) -> Result<ClusterState> {
    let q = b.ncols();
    if k == 0 || k > q {
        return Err(WmcenError::InvalidParameter(format!(
            "k = {k} must lie in 1..={q}"
        )));
    }
    if k == 1 {
        return update_centroids(b, &ClusterState::new(vec![0; q], DMatrix::zeros(b.nrows(), 1))?);
    }
    let points = x * b;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let (wcss, assignment) = lloyd(&points, k, &mut rng)?;
        if best.as_ref().is_none_or(|(w, _)| wcss < *w) {
            best = Some((wcss, assignment));
        }
    }
    let (_, assignment) = best.expect("at least one restart");
    let v = member_means(b, &assignment, k)?;
    ClusterState::new(assignment, v)
}

fn seed_centers(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let q = points.ncols();
    let mut chosen = vec![rng.random_range(0..q)];
    while chosen.len() < k {
        let centers = points.select_columns(&chosen);
        let dist = distances(points, &centers);
        let weights: Vec<f64> = (0..q)
            .map(|s| dist.row(s).iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = q - 1;
            for (s, w) in weights.iter().enumerate() {
                if *w > 0.0 && target < *w {
                    pick = s;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // all points coincide with chosen centers
            (0..q).find(|s| !chosen.contains(s)).unwrap_or(0)
        };
        chosen.push(next);
    }
    points.select_columns(&chosen)
}

fn lloyd(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> Result<(f64, Vec<usize>)> {
    let mut centers = seed_centers(points, k, rng);
    let mut assignment: Vec<usize> = Vec::new();
    for _ in 0..LLOYD_MAX_ITERS {
        let dist = distances(points, &centers);
        let mut next = nearest(&dist);
        repair_empty(&mut next, &dist, k);
        let changed = next != assignment;
        assignment = next;
        centers = member_means(points, &assignment, k)?;
        if !changed {
            break;
        }
    }
    let dist = distances(points, &centers);
    let wcss = assignment
        .iter()
        .enumerate()
        .map(|(s, &l)| dist[(s, l)])
        .sum();
    Ok((wcss, assignment))
}

/// Gradient of the cluster penalty with respect to v_l, for diagnostics.
pub fn centroid_gradient(
    xtx: &DMatrix<f64>,
    b: &DMatrix<f64>,
    clusters: &ClusterState,
    gamma: f64,
    l: usize,
) -> DVector<f64> {
    let v = clusters.centroids().column(l);
    let mut grad = DVector::zeros(b.nrows());
    for (s, &ls) in clusters.assignment().iter().enumerate() {
        if ls == l {
            grad += xtx * (v - b.column(s)) * gamma;
        }
    }
    grad
}
