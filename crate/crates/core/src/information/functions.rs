use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheme::{ObservationGrid, OverlapMatrix, Side};

/// Step of the central difference in `z` for `∂_z a`.
pub const DZ_STEP: f64 = 1e-4;
/// Below this `|ρ|` the `ρ`-terms use the `z²` Taylor coefficient.
pub const TAYLOR_RADIUS: f64 = 1e-4;

/// Binned densities `a(z, t)`, `c(z, t)` on a set of `z` nodes.
///
/// For each bin `[t_b, t_{b+1})`, `a(z, ·)` is the resolvent diagonal
/// `((I - z² G Gᵀ)^{-1})_ii` summed over intervals `I^i` starting in the bin,
/// divided by `b_n` and the bin width, averaged over grids; `c` likewise with
/// `Gᵀ G` and the `J^j`. Between nodes, values are cubic interpolants in `z²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoFunctions {
    horizon: f64,
    /// Ascending, nonnegative, starting at 0.
    z_nodes: Vec<f64>,
    /// `a[node][bin]`
    a: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    /// `z²` Taylor coefficients: densities of `diag(G Gᵀ)` and `diag(Gᵀ G)`.
    a2: Vec<f64>,
    c2: Vec<f64>,
    grids: usize,
    /// `max_z |∫(a(z) - a0) - ∫(c(z) - c0)|`.
    identity_residual: f64,
}

/// Bin of `t` among `bins` equal bins of `[0, horizon]`; points within
/// rounding of a bin edge belong to the bin starting there.
fn bin_index(t: f64, horizon: f64, bins: usize) -> usize {
    ((t / horizon * bins as f64 + 1e-9).floor().max(0.0) as usize).min(bins - 1)
}

/// Nodes `{0} ∪ {|ρ|, |ρ| ± DZ_STEP}` plus a uniform grid in `z²` up to the
/// largest `|ρ| + 2·DZ_STEP`, so that values between distinct correlations
/// are interpolated.
pub fn z_nodes_for(rhos: &[f64]) -> Result<Vec<f64>> {
    let mut nodes = vec![0.0];
    let top = rhos.iter().map(|r| r.abs()).fold(0.0, f64::max);
    if !(top < 1.0 - 2.0 * DZ_STEP) {
        return Err(Error::Domain(top));
    }
    let mut distinct: Vec<f64> = rhos.iter().map(|r| r.abs()).filter(|r| *r >= TAYLOR_RADIUS).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if distinct.len() <= 8 {
        for r in &distinct {
            nodes.extend([r - DZ_STEP, *r, r + DZ_STEP]);
        }
    }
    if distinct.len() > 1 {
        let zmax = top + 2.0 * DZ_STEP;
        let k = 32;
        nodes.extend((1..=k).map(|i| zmax * (i as f64 / k as f64).sqrt()));
    }
    nodes.retain(|z| *z >= 0.0);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    Ok(nodes)
}

/// Averages the binned resolvent-trace densities of `grids` at `|z|` for each
/// `z` in `z_values` (0 is always included).
pub fn estimate_info_functions(grids: &[ObservationGrid], z_values: &[f64], bins: usize) -> Result<InfoFunctions> {
    if grids.is_empty() {
        return Err(Error::InvalidArgument("at least one grid is required".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("at least one time bin is required".into()));
    }
    if let Some(z) = z_values.iter().find(|z| !(z.abs() < 1.0)) {
        return Err(Error::Domain(*z));
    }
    let horizon = grids[0].horizon();
    if grids.iter().any(|g| (g.horizon() - horizon).abs() > 1e-12 * horizon) {
        return Err(Error::InvalidArgument("grids must share the horizon".into()));
    }
    let mut nodes: Vec<f64> = std::iter::once(0.0).chain(z_values.iter().map(|z| z.abs())).collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let width = horizon / bins as f64;
    let bin_of = |t: f64| bin_index(t, horizon, bins);
    let binned = |g: &ObservationGrid, side: Side, diag: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; bins];
        let times = g.times(side);
        for (i, v) in diag.iter().enumerate() {
            out[bin_of(times[i])] += v;
        }
        let scale = 1.0 / (g.bn() * width * grids.len() as f64);
        out.iter_mut().for_each(|v| *v *= scale);
        out
    };

    // per grid: a, c at every node, and the z² coefficients
    let per_grid: Vec<Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>)>> = grids
        .par_iter()
        .map(|g| {
            let ov = OverlapMatrix::new(g);
            let mut a = Vec::with_capacity(nodes.len());
            let mut c = Vec::with_capacity(nodes.len());
            for &z in &nodes {
                a.push(binned(g, Side::First, &ov.resolvent_diagonal(z, Side::First)?));
                c.push(binned(g, Side::Second, &ov.resolvent_diagonal(z, Side::Second)?));
            }
            let a2 = binned(g, Side::First, &ov.diag_power_traces(1, Side::First));
            let c2 = binned(g, Side::Second, &ov.diag_power_traces(1, Side::Second));
            Ok((a, c, a2, c2))
        })
        .collect();

    let zeros = || vec![vec![0.0; bins]; nodes.len()];
    let (mut a, mut c, mut a2, mut c2) = (zeros(), zeros(), vec![0.0; bins], vec![0.0; bins]);
    let add = |acc: &mut [f64], v: &[f64]| acc.iter_mut().zip(v).for_each(|(x, y)| *x += y);
    for r in per_grid {
        let (ga, gc, ga2, gc2) = r?;
        for k in 0..nodes.len() {
            add(&mut a[k], &ga[k]);
            add(&mut c[k], &gc[k]);
        }
        add(&mut a2, &ga2);
        add(&mut c2, &gc2);
    }
    let identity_residual = (0..nodes.len())
        .map(|k| {
            let da: f64 = (0..bins).map(|b| a[k][b] - a[0][b]).sum::<f64>() * width;
            let dc: f64 = (0..bins).map(|b| c[k][b] - c[0][b]).sum::<f64>() * width;
            (da - dc).abs()
        })
        .fold(0.0, f64::max);
    Ok(InfoFunctions { horizon, z_nodes: nodes, a, c, a2, c2, grids: grids.len(), identity_residual })
}

impl InfoFunctions {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn bins(&self) -> usize {
        self.a2.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.horizon / self.bins() as f64
    }

    pub fn bin_start(&self, b: usize) -> f64 {
        b as f64 * self.bin_width()
    }

    pub fn bin_of(&self, t: f64) -> usize {
        bin_index(t, self.horizon, self.bins())
    }

    pub fn z_nodes(&self) -> &[f64] {
        &self.z_nodes
    }

    /// Largest `|z|` at which `a`, `c` are available.
    pub fn coverage(&self) -> f64 {
        *self.z_nodes.last().unwrap()
    }

    pub fn grids(&self) -> usize {
        self.grids
    }

    pub fn identity_residual(&self) -> f64 {
        self.identity_residual
    }

    pub fn a0(&self, bin: usize) -> f64 {
        self.a[0][bin]
    }

    pub fn c0(&self, bin: usize) -> f64 {
        self.c[0][bin]
    }

    pub fn a2(&self, bin: usize) -> f64 {
        self.a2[bin]
    }

    pub fn c2(&self, bin: usize) -> f64 {
        self.c2[bin]
    }

    /// Node values of `a` at node `k`, per bin.
    pub fn a_node(&self, k: usize) -> &[f64] {
        &self.a[k]
    }

    pub fn c_node(&self, k: usize) -> &[f64] {
        &self.c[k]
    }

    pub fn a_at(&self, z: f64, bin: usize) -> f64 {
        self.interp(&self.a, z, self.window(z), bin)
    }

    pub fn c_at(&self, z: f64, bin: usize) -> f64 {
        self.interp(&self.c, z, self.window(z), bin)
    }

    /// `a(z, t)` for `t` in `[0, T]`.
    pub fn a_fn(&self, z: f64, t: f64) -> f64 {
        self.a_at(z, self.bin_of(t))
    }

    pub fn c_fn(&self, z: f64, t: f64) -> f64 {
        self.c_at(z, self.bin_of(t))
    }

    /// Central difference of `a` in `z` with step `DZ_STEP`, both sides on the
    /// interpolant chosen for `z`.
    pub fn da_dz(&self, z: f64, bin: usize) -> f64 {
        let w = self.window(z);
        (self.interp(&self.a, z + DZ_STEP, w.clone(), bin) - self.interp(&self.a, z - DZ_STEP, w, bin))
            / (2.0 * DZ_STEP)
    }

    /// Up to four nodes nearest to `|z|`.
    fn window(&self, z: f64) -> std::ops::Range<usize> {
        let n = self.z_nodes.len();
        let m = n.min(4);
        let z = z.abs();
        if let Some(k) = self.z_nodes.iter().position(|&x| (x - z).abs() <= 1e-14) {
            return k..k + 1;
        }
        let pos = self.z_nodes.partition_point(|&x| x < z);
        let lo = pos.saturating_sub(m / 2).min(n - m);
        lo..lo + m
    }

    /// Lagrange interpolation in `u = z²` over `window`.
    fn interp(&self, table: &[Vec<f64>], z: f64, window: std::ops::Range<usize>, bin: usize) -> f64 {
        if window.len() == 1 && (self.z_nodes[window.start] - z.abs()).abs() <= 1e-14 {
            return table[window.start][bin];
        }
        let window = if window.len() == 1 { self.window_wide(window.start) } else { window };
        let u = z * z;
        let mut total = 0.0;
        for k in window.clone() {
            let uk = self.z_nodes[k] * self.z_nodes[k];
            let mut l = 1.0;
            for m in window.clone() {
                if m != k {
                    let um = self.z_nodes[m] * self.z_nodes[m];
                    l *= (u - um) / (uk - um);
                }
            }
            total += l * table[k][bin];
        }
        total
    }

    fn window_wide(&self, k: usize) -> std::ops::Range<usize> {
        let n = self.z_nodes.len();
        let m = n.min(4);
        let lo = k.saturating_sub(m / 2).min(n - m);
        lo..lo + m
    }
}
