use crate::scheme::Side;
use crate::sde::{DiffusionModel, NonsyncSample};

/// `Σ_{i,j} ΔY^1_i ΔY^2_j 1{I^i ∩ J^j ≠ ∅}` over raw increments.
pub fn hayashi_yoshida(sample: &NonsyncSample) -> f64 {
    let grid = sample.grid();
    let (s, t) = (grid.s_times(), grid.t_times());
    let d1 = sample.increments(Side::First);
    let d2 = sample.increments(Side::Second);
    let mut total = 0.0;
    let mut j0 = 0;
    for i in 0..d1.len() {
        let (a, b) = (s[i], s[i + 1]);
        while j0 < d2.len() && t[j0 + 1] <= a {
            j0 += 1;
        }
        let mut j = j0;
        while j < d2.len() && t[j] < b {
            total += d1[i] * d2[j];
            j += 1;
        }
    }
    total
}

/// `∫_0^T b^1·b^2(t, Ŷ_t, σ)` by left-point sums over the merged grid, `Ŷ` being
/// the previous-tick observed state. Exact for constant coefficients.
pub fn plugin_covariation(model: &DiffusionModel, sigma: &[f64], sample: &NonsyncSample) -> f64 {
    let grid = sample.grid();
    if model.is_constant() {
        return grid.horizon() * model.covariation_rate(0.0, model.y0(), sigma);
    }
    let merged = grid.merged();
    let (y1, y2) = (sample.y1_obs(), sample.y2_obs());
    let (s, t) = (grid.s_times(), grid.t_times());
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    for w in merged.windows(2) {
        let u = w[0];
        while i + 1 < s.len() && s[i + 1] <= u {
            i += 1;
        }
        while j + 1 < t.len() && t[j + 1] <= u {
            j += 1;
        }
        total += model.covariation_rate(u, [y1[i], y2[j]], sigma) * (w[1] - u);
    }
    total
}
