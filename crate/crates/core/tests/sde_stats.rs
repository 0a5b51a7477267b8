use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use nonsync_qmle::scheme::gen_uniform_grid;
use nonsync_qmle::sde::{observe, simulate_path, DiffusionModel, ParamBox};

/// Pearson statistic of standardized draws over equiprobable normal bins.
fn chi2_p_value(draws: &[f64], bins: usize) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut counts = vec![0usize; bins];
    for &x in draws {
        let k = ((normal.cdf(x) * bins as f64) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let expected = draws.len() as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn constant_coefficient_increments_are_exactly_gaussian() {
    // Row norms of b for corr at (1.3, 0.7, 0.5) are 1.3 and 0.7; sub-steps of 0.01
    // inside intervals of length 0.1 and 1/7 must aggregate to exact Gaussians.
    let model = DiffusionModel::builtin("corr").unwrap();
    let sigma = [1.3, 0.7, 0.5];
    let grid = gen_uniform_grid(10, 7, 0.4, 1.0).unwrap();
    let draws = 10_000;
    let (mut first, mut second) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for seed in 0..draws as u64 {
        let s = observe(&simulate_path(&model, &sigma, &grid, Some(0.01), seed).unwrap(), &grid).unwrap();
        let z = s.z();
        first.push(z[3] / 1.3);
        second.push(z[grid.l1() + 2] / 0.7);
    }
    for (label, x) in [("side 1", &first), ("side 2", &second)] {
        let p = chi2_p_value(x, 20);
        assert!(p >= 0.01, "{label}: chi-square p = {p}");
    }
}

#[test]
fn drift_contribution_scales_with_root_step() {
    let model = DiffusionModel::new("drift", ParamBox::new(vec![0.5], vec![2.0]).unwrap(), |_, _, s| {
        [[s[0], 0.0], [0.0, s[0]]]
    })
    .with_drift(|_, _, _| [1.0, 1.0])
    .constant_coefficients();
    let mean_z = |n: usize| {
        let grid = gen_uniform_grid(n, n, 0.5, 1.0).unwrap();
        let reps = 10_000u64;
        let total: f64 = (0..reps)
            .map(|seed| {
                let s = observe(&simulate_path(&model, &[1.0], &grid, None, seed).unwrap(), &grid).unwrap();
                s.z().iter().sum::<f64>() / s.z().len() as f64
            })
            .sum();
        (total / reps as f64).abs()
    };
    let ratio = mean_z(1000) / mean_z(500);
    // E Z = μ √|I|: halving the step scales the mean by 1/√2
    assert!((0.55..=0.95).contains(&ratio), "{ratio}");
    assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.05, "{ratio}");
}
