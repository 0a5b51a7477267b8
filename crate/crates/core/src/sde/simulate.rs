use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{seeded, PATH_STREAM};
use crate::scheme::ObservationGrid;
use crate::sde::model::{DiffusionModel, Vec2};

/// Simulated values of `Y` at the points of the merged grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub values: Vec<Vec2>,
}

/// `min(r_n / 4, T / 1024)`.
pub fn default_max_step(grid: &ObservationGrid) -> f64 {
    (grid.mesh() / 4.0).min(grid.horizon() / 1024.0)
}

/// Euler–Maruyama on the merged grid, each merged interval split into equal
/// substeps no longer than `max_step`. Steps land exactly on merged-grid points.
pub fn simulate_path(
    model: &DiffusionModel,
    sigma: &[f64],
    grid: &ObservationGrid,
    max_step: Option<f64>,
    seed: u64,
) -> Result<Path> {
    let mut rng = seeded(seed, PATH_STREAM);
    simulate_path_with(model, sigma, grid, max_step, &mut rng)
}

pub fn simulate_path_with<R: Rng + ?Sized>(
    model: &DiffusionModel,
    sigma: &[f64],
    grid: &ObservationGrid,
    max_step: Option<f64>,
    rng: &mut R,
) -> Result<Path> {
    model.param_box().check(sigma)?;
    let max_step = max_step.unwrap_or_else(|| default_max_step(grid));
    if !(max_step > 0.0) {
        return Err(Error::InvalidArgument(format!("max_step must be positive, got {max_step}")));
    }
    let merged = grid.merged();
    let mut values = Vec::with_capacity(merged.len());
    let mut x = model.y0();
    values.push(x);
    let fixed_b = model.is_constant().then(|| model.diffusion(0.0, x, sigma));
    for w in merged.windows(2) {
        let (a, b_end) = (w[0], w[1]);
        let m = ((b_end - a) / max_step).ceil().max(1.0) as usize;
        let h = (b_end - a) / m as f64;
        let sq = h.sqrt();
        for step in 0..m {
            let t = a + step as f64 * h;
            let mu = model.drift(t, x, sigma);
            let b = match fixed_b {
                Some(b) => b,
                None => model.diffusion(t, x, sigma),
            };
            if !(mu.iter().chain(b.iter().flatten()).all(|v| v.is_finite())) {
                return Err(Error::Simulation { t, x });
            }
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            x = [
                x[0] + mu[0] * h + (b[0][0] * e1 + b[0][1] * e2) * sq,
                x[1] + mu[1] * h + (b[1][0] * e1 + b[1][1] * e2) * sq,
            ];
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Simulation { t: b_end, x });
        }
        values.push(x);
    }
    Ok(Path { times: merged.to_vec(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::gen_uniform_grid;
    use crate::sde::model::ParamBox;
    use crate::sde::model::DiffusionModel;

    fn unit_box() -> ParamBox {
        ParamBox::new(vec![0.0], vec![1.0]).unwrap()
    }

    #[test]
    fn zero_coefficients_keep_initial_value() {
        let m = DiffusionModel::new("zero", unit_box(), |_, _, _| [[0.0; 2]; 2]).with_y0([1.0, -2.0]);
        let g = gen_uniform_grid(10, 7, 0.3, 1.0).unwrap();
        let p = simulate_path(&m, &[0.5], &g, None, 1).unwrap();
        assert!(p.values.iter().all(|v| *v == [1.0, -2.0]));
        assert_eq!(p.times, g.merged());
    }

    #[test]
    fn unit_drift_is_exact() {
        let m = DiffusionModel::new("ode", unit_box(), |_, _, _| [[0.0; 2]; 2])
            .with_drift(|_, _, _| [1.0, 0.0])
            .with_y0([0.25, 0.0]);
        let g = gen_uniform_grid(3, 5, 0.5, 2.0).unwrap();
        let p = simulate_path(&m, &[0.5], &g, Some(0.01), 1).unwrap();
        assert!((p.values.last().unwrap()[0] - 2.25).abs() < 1e-12);
    }

    #[test]
    fn brownian_terminal_variance() {
        // Var(W_1) = 1; sample variance of 10^4 draws has relative sd sqrt(2/10^4) ≈ 1.4%.
        let m = DiffusionModel::new("bm", unit_box(), |_, _, _| [[1.0, 0.0], [0.0, 1.0]]).constant_coefficients();
        let g = gen_uniform_grid(4, 3, 0.2, 1.0).unwrap();
        let n = 10_000;
        let ends: Vec<Vec2> =
            (0..n).map(|s| *simulate_path(&m, &[0.5], &g, Some(0.1), s).unwrap().values.last().unwrap()).collect();
        for k in 0..2 {
            let mean = ends.iter().map(|v| v[k]).sum::<f64>() / n as f64;
            let var = ends.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((var - 1.0).abs() < 0.05, "component {k}: {var}");
        }
        let cov = ends.iter().map(|v| v[0] * v[1]).sum::<f64>() / n as f64;
        assert!(cov.abs() < 0.05);
    }

    #[test]
    fn non_finite_coefficient_reports_location() {
        let m = DiffusionModel::new("bad", unit_box(), |t, _, _| if t > 0.5 { [[f64::NAN, 0.0], [0.0, 1.0]] } else { [[1.0, 0.0], [0.0, 1.0]] });
        let g = gen_uniform_grid(4, 4, 0.0, 1.0).unwrap();
        match simulate_path(&m, &[0.5], &g, None, 3) {
            Err(Error::Simulation { t, .. }) => assert!(t > 0.5),
            other => panic!("expected simulation error, got {other:?}"),
        }
    }

    #[test]
    fn sigma_outside_box_rejected() {
        let m = DiffusionModel::builtin("bm").unwrap();
        let g = gen_uniform_grid(4, 4, 0.0, 1.0).unwrap();
        assert!(matches!(simulate_path(&m, &[10.0], &g, None, 0), Err(Error::OutsideBox { .. })));
    }

    #[test]
    fn deterministic_given_seed() {
        let m = DiffusionModel::builtin("state").unwrap();
        let g = gen_uniform_grid(50, 40, 0.5, 1.0).unwrap();
        let a = simulate_path(&m, &[1.0, 0.7], &g, None, 9).unwrap();
        let b = simulate_path(&m, &[1.0, 0.7], &g, None, 9).unwrap();
        assert_eq!(a, b);
    }
}
