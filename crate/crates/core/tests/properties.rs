mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use wmcen::objective::{cluster_penalty, jaeckel_dispersion, majorizer_m, objective_l_dagger};
use wmcen::oracle::{exhaustive_cluster_check, grid_minimize_l_dagger, GridSpec};
use wmcen::simgen::{median_ape, run_study, ErrorKind, Method, SimulationSpec, StudyGrid};
use wmcen::solver::{update_centroids, update_clusters};
use wmcen::tuning::{cv_score, grid_search, kfold_split, Criterion, TuningGrid};
use wmcen::*;

fn hp(lambda: f64, gamma: f64, k: usize) -> Hyperparams {
    Hyperparams::new(lambda, gamma, k, Hyperparams::DEFAULT_EPSILON).unwrap()
}

fn tight() -> SolverConfig {
    SolverConfig {
        tol: 1e-10,
        max_inner_iters: 5000,
        ..SolverConfig::default()
    }
}

#[test]
fn tiny_fit_reaches_the_grid_minimum() {
    let mut r = rng(5);
    let (d, _) = random_dataset(&mut r, 6, 2, 1, 0.5);
    let h = hp(0.1, 0.0, 1);
    let result = fit(&d, &h, &tight()).unwrap();
    let ps = build_pairwise(&d).unwrap();
    let cs = ClusterState::single(2, 1);
    let coarse = GridSpec::new(-2.0, 2.0, 0.005).unwrap();
    let (b_grid, v_grid) = grid_minimize_l_dagger(&ps, d.x(), &h, &cs, &coarse).unwrap();
    assert!(result.objective() <= v_grid + 1e-3);
    // a finer grid around the coarse argmin closes the discretization gap
    let mut best = f64::INFINITY;
    for a in 0..=200 {
        for b in 0..=200 {
            let beta = DMatrix::from_column_slice(
                2,
                1,
                &[b_grid[(0, 0)] - 0.02 + a as f64 * 0.0002, b_grid[(1, 0)] - 0.02 + b as f64 * 0.0002],
            );
            best = best.min(objective_l_dagger(&ps, d.x(), &beta, &cs, &h).unwrap().total);
        }
    }
    assert!((result.objective() - best).abs() <= 1e-3, "{} vs {}", result.objective(), best);
}

#[test]
fn objective_decreases_toward_the_oracle_minimizer() {
    let mut r = rng(8);
    let (d, _) = random_dataset(&mut r, 6, 2, 1, 0.5);
    let h = hp(0.1, 0.0, 1);
    let ps = build_pairwise(&d).unwrap();
    let cs = ClusterState::single(2, 1);
    let (b_star, _) =
        grid_minimize_l_dagger(&ps, d.x(), &h, &cs, &GridSpec::new(-2.0, 2.0, 0.01).unwrap()).unwrap();
    let mut prev = f64::INFINITY;
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let v = objective_l_dagger(&ps, d.x(), &(&b_star * t), &cs, &h).unwrap().total;
        assert!(v < prev);
        prev = v;
    }
}

#[test]
fn noiseless_data_is_recovered() {
    let mut r = rng(3);
    let (d, _) = random_dataset(&mut r, 20, 3, 2, 0.0);
    let result = fit(&d, &hp(1e-6, 0.0, 1), &tight()).unwrap();
    let y_hat = result.predict(d.x()).unwrap();
    assert!(median_ape(d.y(), &y_hat).unwrap() < 0.01);
}

#[test]
fn predictions_reproduce_cluster_term_fits() {
    let mut r = rng(21);
    let (d, _) = random_dataset(&mut r, 15, 3, 3, 1.0);
    let result = fit(&d, &hp(0.5, 2.0, 2), &SolverConfig::default()).unwrap();
    let y_hat = result.predict(d.x()).unwrap();
    let xc = column_centered(d.x());
    let fitted = &xc * &result.b;
    let offset = &y_hat - &fitted;
    // predictions differ from the centred fits by a per-response constant
    for s in 0..3 {
        let c = offset[(0, s)];
        for i in 0..15 {
            assert!((offset[(i, s)] - c).abs() < 1e-10);
        }
    }
    assert!(predict(&result.b, &result.intercepts, &DMatrix::zeros(2, 4)).is_err());
    assert_eq!(
        predict(&DMatrix::zeros(2, 2), &DVector::zeros(2), &DMatrix::from_element(3, 2, 4.0)).unwrap(),
        DMatrix::zeros(3, 2)
    );
    let identity = predict(&DMatrix::from_element(1, 1, 1.0), &DVector::zeros(1), &DMatrix::from_row_slice(3, 1, &[1.0, -2.0, 5.0])).unwrap();
    assert_eq!(identity.as_slice(), &[1.0, -2.0, 5.0]);
}

#[test]
fn row_permutation_leaves_fit_unchanged() {
    let mut r = rng(31);
    for _ in 0..3 {
        let (d, _) = random_dataset(&mut r, 12, 3, 3, 1.0);
        let mut perm: Vec<usize> = (0..12).collect();
        for i in (1..12).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let shuffled = d.subset(&perm).unwrap();
        let h = hp(0.3, 1.0, 2);
        let a = fit(&d, &h, &tight()).unwrap();
        let b = fit(&shuffled, &h, &tight()).unwrap();
        assert!((&a.b - &b.b).amax() < 1e-8, "{}", (&a.b - &b.b).amax());
    }
}

#[test]
fn response_shift_only_moves_its_intercept() {
    let mut r = rng(41);
    let (d, _) = random_dataset(&mut r, 14, 2, 3, 1.0);
    let h = hp(0.2, 0.5, 2);
    let a = fit(&d, &h, &tight()).unwrap();
    let (x, mut y) = d.clone().into_parts();
    for i in 0..14 {
        y[(i, 1)] += 3.0;
    }
    let shifted = validate_dataset(x, y).unwrap();
    let b = fit(&shifted, &h, &tight()).unwrap();
    assert!((&a.b - &b.b).amax() < 1e-8);
    assert!((b.intercepts[1] - a.intercepts[1] - 3.0).abs() < 1e-8);
    assert!((b.intercepts[0] - a.intercepts[0]).abs() < 1e-8);
    assert!((b.intercepts[2] - a.intercepts[2]).abs() < 1e-8);
}

#[test]
fn memberships_stay_binary_with_consistent_counts() {
    let mut r = rng(51);
    for k in 1..=3 {
        let (d, _) = random_dataset(&mut r, 10, 2, 4, 1.0);
        let result = fit(&d, &hp(0.1, 1.0, k), &SolverConfig::default()).unwrap();
        let u = result.clusters.membership();
        for s in 0..4 {
            let row: Vec<f64> = u.row(s).iter().copied().collect();
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
        }
        for l in 0..k {
            assert_eq!(u.column(l).sum() as usize, result.clusters.counts()[l]);
            assert!(result.clusters.counts()[l] >= 1);
        }
    }
}

#[test]
fn k_above_q_is_rejected() {
    let mut r = rng(2);
    let (d, _) = random_dataset(&mut r, 8, 2, 2, 1.0);
    assert!(matches!(fit(&d, &hp(0.1, 1.0, 3), &SolverConfig::default()), Err(WmcenError::InvalidParameter(_))));
}

#[test]
fn singleton_clusters_match_gamma_zero() {
    let mut r = rng(61);
    for _ in 0..4 {
        let (d, _) = random_dataset(&mut r, 10, 3, 3, 1.0);
        let a = fit(&d, &hp(0.2, 5.0, 3), &SolverConfig::default()).unwrap();
        let b = fit(&d, &hp(0.2, 0.0, 1), &SolverConfig::default()).unwrap();
        assert!((&a.b - &b.b).amax() < 1e-8);
    }
}

#[test]
fn cluster_update_matches_enumeration() {
    let mut r = rng(71);
    let q = 3;
    let x = normal_matrix(&mut r, 5, 2);
    let b = normal_matrix(&mut r, 2, q);
    let v = normal_matrix(&mut r, 2, 2);
    let u = exhaustive_cluster_check(&x, &b, &v).unwrap();
    let mut expected: Vec<usize> = (0..q).map(|s| if u[(s, 0)] == 1.0 { 0 } else { 1 }).collect();
    repair_reference(&mut expected, &profile_distances(&x, &b, &v), 2);
    let cs = ClusterState::new(vec![0; q], v).unwrap();
    assert_eq!(update_clusters(&x, &b, &cs).unwrap().assignment(), expected.as_slice());
}

#[test]
fn centroids_are_stationary() {
    let mut r = rng(81);
    let x = normal_matrix(&mut r, 6, 3);
    let b = normal_matrix(&mut r, 3, 4);
    let cs = ClusterState::new(vec![0, 1, 0, 0], DMatrix::zeros(3, 2)).unwrap();
    let cs = update_centroids(&b, &cs).unwrap();
    let h = 1e-5;
    for l in 0..2 {
        for j in 0..3 {
            let mut up = cs.centroids().clone();
            up[(j, l)] += h;
            let mut dn = cs.centroids().clone();
            dn[(j, l)] -= h;
            let f = |v: DMatrix<f64>| {
                cluster_penalty(&x, &b, &ClusterState::new(cs.assignment().to_vec(), v).unwrap(), 2.0).unwrap()
            };
            let grad = (f(up) - f(dn)) / (2.0 * h);
            assert!(grad.abs() < 1e-6, "{grad}");
        }
    }
    let single = ClusterState::new(vec![0, 1, 1, 1], DMatrix::zeros(3, 2)).unwrap();
    let single = update_centroids(&b, &single).unwrap();
    assert_eq!(single.centroids().column(0), b.column(0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn descent_holds_on_random_instances(seed in any::<u64>(), n in 6usize..12, p in 1usize..4, q in 1usize..4) {
        let mut r = rng(seed);
        let (d, _) = random_dataset(&mut r, n, p, q, 1.0);
        let k = 1 + (seed as usize) % q;
        let result = fit(&d, &hp(0.3, 0.7, k), &SolverConfig::default()).unwrap();
        for w in result.objective_trace.windows(2) {
            prop_assert!(w[1] - w[0] <= 1e-10);
        }
    }

    #[test]
    fn majorizer_dominates_and_touches(seed in any::<u64>(), n in 3usize..10, p in 1usize..4, q in 1usize..3) {
        let mut r = rng(seed);
        let (d, _) = random_dataset(&mut r, n, p, q, 1.0);
        let ps = build_pairwise(&d).unwrap();
        let anchor = normal_matrix(&mut r, p, q);
        let probe = normal_matrix(&mut r, p, q) * 2.0;
        let cs = ClusterState::new(vec![0; q], normal_matrix(&mut r, p, 1)).unwrap();
        let h = Hyperparams::new(0.7, 0.4, 1, 1e-3).unwrap();
        let cfg = SolverConfig::default();
        let at_anchor = majorizer_m(&ps, d.x(), &anchor, &anchor, &cs, &h, &cfg).unwrap();
        let l_anchor = objective_l_dagger(&ps, d.x(), &anchor, &cs, &h).unwrap().total;
        prop_assert!((at_anchor - l_anchor).abs() <= 1e-10 * (1.0 + l_anchor.abs()));
        let m = majorizer_m(&ps, d.x(), &probe, &anchor, &cs, &h, &cfg).unwrap();
        let l = objective_l_dagger(&ps, d.x(), &probe, &cs, &h).unwrap().total;
        prop_assert!(m >= l - 1e-10 * (1.0 + l.abs()));
    }

    #[test]
    fn rank_form_is_proportional(values in proptest::collection::hash_set(-1_000_000i64..1_000_000, 3..30)) {
        let e: Vec<f64> = values.into_iter().map(|v| v as f64 / 1000.0).collect();
        let n = e.len() as f64;
        let ratio = brute_pairwise(&e) / jaeckel_dispersion(&e).unwrap();
        let expected = 2.0 * (n + 1.0) / 12f64.sqrt();
        prop_assert!((ratio / expected - 1.0).abs() < 1e-10);
    }

    #[test]
    fn folds_partition_the_rows(n in 2usize..60, folds in 2usize..8, seed in any::<u64>()) {
        prop_assume!(folds <= n);
        let parts = kfold_split(n, folds, seed).unwrap();
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn median_ape_ignores_cell_order(cells in proptest::collection::vec(-100.0f64..100.0, 1..40), seed in any::<u64>()) {
        let n = cells.len();
        let y = DMatrix::from_column_slice(n, 1, &cells);
        let mut shuffled = cells.clone();
        let mut r = rng(seed);
        for i in (1..n).rev() {
            shuffled.swap(i, r.random_range(0..=i));
        }
        let a = median_ape(&y, &DMatrix::zeros(n, 1)).unwrap();
        let b = median_ape(&DMatrix::from_column_slice(1, n, &shuffled), &DMatrix::zeros(1, n)).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn tuning_examples() {
    let mut r = rng(91);
    let (d, _) = random_dataset(&mut r, 20, 2, 2, 1.0);
    let cfg = SolverConfig::default();
    let folds = kfold_split(20, 5, 1).unwrap();

    // the single candidate is returned
    let grid = TuningGrid {
        lambdas: vec![0.4],
        gammas: vec![0.1],
        ks: vec![2],
        folds: 5,
        criterion: Criterion::MedianApe,
        seed: 1,
        epsilon: 1e-6,
    };
    let (best, table) = grid_search(&d, &grid, &cfg).unwrap();
    assert_eq!(best, hp(0.4, 0.1, 2));
    assert_eq!(table.len(), 1);

    // a huge lambda scores like the zero model
    let big = cv_score(&d, &hp(1e6, 0.0, 1), &cfg, &folds, Criterion::MedianApe);
    let mut zero = 0.0;
    for held in &folds {
        let keep: Vec<usize> = (0..20).filter(|i| !held.contains(i)).collect();
        let train = d.subset(&keep).unwrap();
        let test = d.subset(held).unwrap();
        let med: Vec<f64> = (0..2)
            .map(|s| wmcen::stats::median(&train.y().column(s).iter().copied().collect::<Vec<_>>()))
            .collect();
        let pred = DMatrix::from_fn(held.len(), 2, |_, s| med[s]);
        zero += median_ape(test.y(), &pred).unwrap() / 5.0;
    }
    assert!((big - zero).abs() < 1e-4, "{big} vs {zero}");

    // fold order does not matter
    let mut reversed = folds.clone();
    reversed.reverse();
    let h = hp(0.2, 0.3, 2);
    let a = cv_score(&d, &h, &cfg, &folds, Criterion::MeanSquared);
    let b = cv_score(&d, &h, &cfg, &reversed, Criterion::MeanSquared);
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn noiseless_cv_score_is_near_zero() {
    let mut r = rng(93);
    let (d, _) = random_dataset(&mut r, 25, 2, 2, 0.0);
    let folds = kfold_split(25, 5, 0).unwrap();
    let score = cv_score(&d, &hp(1e-6, 0.0, 1), &tight(), &folds, Criterion::MedianApe);
    assert!(score < 1e-3, "{score}");
}

#[test]
fn grid_search_picks_the_table_minimum_over_small_ks() {
    let mut r = rng(95);
    let (d, _) = random_dataset(&mut r, 20, 3, 4, 1.0);
    let grid = TuningGrid {
        lambdas: vec![0.1, 1.0, 10.0],
        gammas: vec![0.1, 10.0],
        ks: vec![2, 3],
        folds: 5,
        criterion: Criterion::MedianApe,
        seed: 4,
        epsilon: 1e-6,
    };
    let (best, table) = grid_search(&d, &grid, &SolverConfig::default()).unwrap();
    let min = table.iter().map(|c| c.score).fold(f64::INFINITY, f64::min);
    let chosen = table.iter().find(|c| c.hyperparams == best).unwrap();
    assert_eq!(chosen.score, min);
    assert!([2, 3].contains(&best.k));
}

#[test]
fn single_replication_study() {
    let spec = SimulationSpec::new(12, 0.5, 0.05, ErrorKind::T4, 1, 5);
    let cfg = SolverConfig {
        tol: 1e-3,
        ..SolverConfig::default()
    };
    let result = run_study(&spec, Method::WilcoxonLasso, &StudyGrid::compact(), &cfg).unwrap();
    assert_eq!(result.per_rep.len(), 1);
    assert!(result.failures.is_empty());
    assert_eq!(result.summary.ape_sd, 0.0);
    assert_eq!(result.summary.ape_mean, result.per_rep[0].median_ape);
    assert_eq!(result.per_rep[0].hyperparams.gamma, 0.0);
}
