use proptest::prelude::*;

use nonsync_qmle::estimate::hayashi_yoshida;
use nonsync_qmle::likelihood::QuasiLikEngine;
use nonsync_qmle::scheme::{ObservationGrid, OverlapMatrix, Side};
use nonsync_qmle::sde::{observe, simulate_path, DiffusionModel, NonsyncSample};

/// Cumulative sums of positive gaps, rescaled to end exactly at 1.
fn times_from(gaps: &[f64]) -> Vec<f64> {
    let total: f64 = gaps.iter().sum();
    let mut t = vec![0.0];
    let mut acc = 0.0;
    for g in &gaps[..gaps.len() - 1] {
        acc += g / total;
        t.push(acc);
    }
    t.push(1.0);
    t
}

fn grid_strategy(max_len: usize) -> impl Strategy<Value = ObservationGrid> {
    (prop::collection::vec(0.05f64..1.0, 1..max_len), prop::collection::vec(0.05f64..1.0, 1..max_len))
        .prop_map(|(a, b)| ObservationGrid::new(times_from(&a), times_from(&b), None).unwrap())
}

fn overlap_len(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merged_is_sorted_union(grid in grid_strategy(30)) {
        let mut all: Vec<f64> = grid.s_times().iter().chain(grid.t_times()).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        prop_assert_eq!(grid.merged(), &all[..]);
        prop_assert_eq!(grid.l1() + 1, grid.s_times().len());
        prop_assert!(grid.l1() >= 1 && grid.l2() >= 1);
    }

    #[test]
    fn overlap_entries_follow_interval_intersections(grid in grid_strategy(30)) {
        let g = OverlapMatrix::new(&grid);
        for i in 0..grid.l1() {
            let ii = grid.interval(Side::First, i);
            let mut nonzero = Vec::new();
            let mut partition = 0.0;
            for j in 0..grid.l2() {
                let jj = grid.interval(Side::Second, j);
                let v = g.get(i, j);
                let len = overlap_len(ii, jj);
                prop_assert_eq!(v > 0.0, len > 0.0);
                prop_assert!(v <= 1.0 + 1e-12);
                if v > 0.0 {
                    nonzero.push(j);
                    prop_assert!((v - len / ((ii.1 - ii.0) * (jj.1 - jj.0)).sqrt()).abs() < 1e-12);
                }
                partition += v * ((jj.1 - jj.0) / (ii.1 - ii.0)).sqrt();
            }
            // contiguous run of overlapping columns
            prop_assert_eq!(nonzero.len(), nonzero.last().unwrap() - nonzero[0] + 1);
            prop_assert!((partition - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn overlap_norm_at_most_one(grid in grid_strategy(40)) {
        let dense = OverlapMatrix::new(&grid).to_dense();
        let top = dense.singular_values().max();
        prop_assert!(top <= 1.0 + 1e-10, "{}", top);
    }

    #[test]
    fn resolvent_trace_identity(grid in grid_strategy(40), z in -0.95f64..0.95) {
        let g = OverlapMatrix::new(&grid);
        let t1: f64 = g.resolvent_diagonal(z, Side::First).unwrap().iter().sum();
        let t2: f64 = g.resolvent_diagonal(z, Side::Second).unwrap().iter().sum();
        let d = (t1 - g.l1() as f64) - (t2 - g.l2() as f64);
        prop_assert!(d.abs() <= 1e-10 * t1.max(1.0), "{}", d);
    }

    #[test]
    fn resolvent_diagonal_increases_with_z(grid in grid_strategy(30), z in 0.0f64..0.9, dz in 0.0f64..0.09) {
        let g = OverlapMatrix::new(&grid);
        let a = g.resolvent_diagonal(z, Side::First).unwrap();
        let b = g.resolvent_diagonal(z + dz, Side::First).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(*y >= *x - 1e-12);
        }
    }

    #[test]
    fn synchronous_grid_gives_identity(gaps in prop::collection::vec(0.05f64..1.0, 1..40)) {
        let t = times_from(&gaps);
        let grid = ObservationGrid::new(t.clone(), t, None).unwrap();
        let g = OverlapMatrix::new(&grid);
        prop_assert_eq!(g.bandwidth(), 0);
        for i in 0..grid.l1() {
            prop_assert_eq!(g.get(i, i), 1.0);
        }
    }

    #[test]
    fn banded_matches_dense(grid in grid_strategy(60), seed in 0u64..1000, state in any::<bool>()) {
        let name = if state { "state" } else { "corr" };
        let model = DiffusionModel::builtin(name).unwrap();
        let truth = DiffusionModel::builtin_truth(name).unwrap();
        let sample = observe(&simulate_path(&model, &truth, &grid, None, seed).unwrap(), &grid).unwrap();
        let engine = QuasiLikEngine::new(model, sample);
        let sigma: Vec<f64> = truth.iter().map(|v| v * 0.9).collect();
        let banded = engine.quasi_loglik(&sigma).unwrap();
        let dense = engine.quasi_loglik_dense(&sigma).unwrap();
        prop_assert!((banded - dense).abs() <= 1e-8 * (1.0 + dense.abs()));
    }

    #[test]
    fn scaling_shifts_likelihood_by_log_c(grid in grid_strategy(40), seed in 0u64..1000, c in 0.5f64..2.0) {
        let model = DiffusionModel::builtin("bm").unwrap();
        let sample = observe(&simulate_path(&model, &[1.0], &grid, None, seed).unwrap(), &grid).unwrap();
        let scale = |v: &[f64]| v.iter().map(|x| c * x).collect::<Vec<_>>();
        let scaled = NonsyncSample::new(grid.clone(), scale(sample.y1_obs()), scale(sample.y2_obs())).unwrap();
        let a = QuasiLikEngine::new(model.clone(), sample);
        let b = QuasiLikEngine::new(model, scaled);
        let ell = (grid.l1() + grid.l2()) as f64;
        for sigma in [0.8, 1.0, 1.3] {
            let d = b.quasi_loglik(&[c * sigma]).unwrap() - a.quasi_loglik(&[sigma]).unwrap();
            prop_assert!((d + ell * c.ln()).abs() < 1e-9 * ell, "{}", d);
        }
    }

    #[test]
    fn hy_on_synchronous_grid_is_realized_covariance(gaps in prop::collection::vec(0.05f64..1.0, 1..40), seed in 0u64..1000) {
        let t = times_from(&gaps);
        let grid = ObservationGrid::new(t.clone(), t, None).unwrap();
        let model = DiffusionModel::builtin("corr").unwrap();
        let s = observe(&simulate_path(&model, &[1.0, 0.8, 0.6], &grid, None, seed).unwrap(), &grid).unwrap();
        let rc: f64 = s.increments(Side::First).iter().zip(s.increments(Side::Second)).map(|(a, b)| a * b).sum();
        prop_assert!((hayashi_yoshida(&s) - rc).abs() < 1e-12);
    }
}
