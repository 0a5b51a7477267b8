//! Limit information `Γ` from scheme resolvent traces, and its empirical
//! counterpart `-b_n^{-1} ∂²H` averaged over simulated samples.

mod functions;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use functions::{estimate_info_functions, z_nodes_for, InfoFunctions, DZ_STEP, TAYLOR_RADIUS};

use crate::error::{Error, Result};
use crate::likelihood::QuasiLikEngine;
use crate::rng::replicate_seed;
use crate::scheme::ObservationGrid;
use crate::sde::{observe, simulate_path, DiffusionModel, Path, Vec2};

/// Where the coefficients are evaluated in time.
#[derive(Debug, Clone, Copy)]
pub enum CoeffPath<'a> {
    /// Once per bin at `(bin start, y0)`; exact for constant coefficients.
    Constant,
    /// Left-point values of a simulated path.
    Simulated(&'a Path),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Formula,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaResult {
    pub route: Route,
    pub gamma: Vec<Vec<f64>>,
    /// Monte Carlo standard error per entry (empirical route).
    pub standard_error: Option<Vec<Vec<f64>>>,
    pub replicates: usize,
    /// Per time bin contribution to `Γ` (formula route).
    pub per_bin: Vec<Vec<Vec<f64>>>,
    /// Evaluation points with `|ρ| < 1e-12`, handled by the continuous limit.
    pub near_zero_rho: usize,
    /// `z` coverage of the information functions minus what was needed.
    pub coverage_margin: Option<f64>,
}

impl GammaResult {
    pub fn matrix(&self) -> DMatrix<f64> {
        to_matrix(&self.gamma)
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

struct Point {
    t: f64,
    x: Vec2,
    weight: f64,
    bin: usize,
}

fn time_points(model: &DiffusionModel, info: &InfoFunctions, coeff: CoeffPath) -> Vec<Point> {
    match coeff {
        CoeffPath::Constant => (0..info.bins())
            .map(|b| Point { t: info.bin_start(b), x: model.y0(), weight: info.bin_width(), bin: b })
            .collect(),
        CoeffPath::Simulated(path) => path
            .times
            .windows(2)
            .zip(&path.values)
            .map(|(w, &x)| Point { t: w[0], x, weight: w[1] - w[0], bin: info.bin_of(w[0]) })
            .collect(),
    }
}

/// `ρ`, `∂ρ`, `∂B^1`, `∂B^2` at `σ*`, derivatives by central differences.
struct Local {
    rho: f64,
    d_rho: DVector<f64>,
    d_b1: DVector<f64>,
    d_b2: DVector<f64>,
}

fn local(model: &DiffusionModel, sigma: &[f64], t: f64, x: Vec2) -> Local {
    let d = sigma.len();
    let (n1, n2, rho) = model.norms_and_correlation(t, x, sigma);
    let mut l = Local { rho, d_rho: DVector::zeros(d), d_b1: DVector::zeros(d), d_b2: DVector::zeros(d) };
    let mut s = sigma.to_vec();
    for j in 0..d {
        let h = 1e-5 * sigma[j].abs().max(1.0);
        s[j] = sigma[j] + h;
        let (p1, p2, pr) = model.norms_and_correlation(t, x, &s);
        s[j] = sigma[j] - h;
        let (m1, m2, mr) = model.norms_and_correlation(t, x, &s);
        s[j] = sigma[j];
        l.d_rho[j] = (pr - mr) / (2.0 * h);
        // B^k(σ) = |b^k(σ*)| / |b^k(σ)|
        l.d_b1[j] = (n1 / p1 - n1 / m1) / (2.0 * h);
        l.d_b2[j] = (n2 / p2 - n2 / m2) / (2.0 * h);
    }
    l
}

/// Integrand of `Γ` at one time point in bin `bin`. Below `TAYLOR_RADIUS` the
/// `ρ`-terms use `a(z) ≈ a0 + a2 z²`, whose `ρ → 0` limit is `a2 ∂ρ ∂ρᵀ`.
fn integrand(info: &InfoFunctions, bin: usize, l: &Local) -> DMatrix<f64> {
    let outer = |v: &DVector<f64>| v * v.transpose();
    let rho = l.rho;
    if rho.abs() >= TAYLOR_RADIUS {
        let a = info.a_at(rho, bin);
        let c = info.c_at(rho, bin);
        let da = info.da_dz(rho, bin);
        let v = &l.d_rho / rho - &l.d_b1 - &l.d_b2;
        outer(&l.d_rho) * (da / rho) + outer(&l.d_b1) * (2.0 * a) + outer(&l.d_b2) * (2.0 * c)
            - outer(&v) * (a - info.a0(bin))
    } else {
        let (a2, c2) = (info.a2(bin), info.c2(bin));
        let a = info.a0(bin) + a2 * rho * rho;
        let c = info.c0(bin) + c2 * rho * rho;
        let u = &l.d_rho - (&l.d_b1 + &l.d_b2) * rho;
        outer(&l.d_rho) * (2.0 * a2) + outer(&l.d_b1) * (2.0 * a) + outer(&l.d_b2) * (2.0 * c) - outer(&u) * a2
    }
}

/// `Γ` by integrating the limit integrand over the time bins of `info`.
pub fn gamma_formula(
    model: &DiffusionModel,
    sigma_star: &[f64],
    info: &InfoFunctions,
    coeff: CoeffPath,
) -> Result<GammaResult> {
    let bx = model.param_box();
    if sigma_star.len() != bx.dim() || !bx.contains_interior(sigma_star) {
        return Err(Error::InvalidArgument(format!("sigma* = {sigma_star:?} is not interior to the parameter box")));
    }
    let d = sigma_star.len();
    let points = time_points(model, info, coeff);
    let locals: Vec<Local> = points.iter().map(|p| local(model, sigma_star, p.t, p.x)).collect();
    if let Some(l) = locals.iter().find(|l| !l.rho.is_finite()) {
        return Err(Error::Numerical(format!("non-finite correlation {}", l.rho)));
    }
    let required =
        locals.iter().map(|l| l.rho.abs()).filter(|r| *r >= TAYLOR_RADIUS).map(|r| r + DZ_STEP).fold(0.0, f64::max);
    if required > info.coverage() + 1e-9 {
        return Err(Error::Coverage { required, available: info.coverage() });
    }
    let mut per_bin = vec![DMatrix::zeros(d, d); info.bins()];
    let mut near_zero = 0;
    for (p, l) in points.iter().zip(&locals) {
        if l.rho.abs() < 1e-12 {
            near_zero += 1;
        }
        per_bin[p.bin] += integrand(info, p.bin, l) * p.weight;
    }
    let mut gamma = per_bin.iter().fold(DMatrix::zeros(d, d), |acc, m| acc + m);
    gamma = (&gamma + gamma.transpose()) * 0.5;
    Ok(GammaResult {
        route: Route::Formula,
        gamma: to_rows(&gamma),
        standard_error: None,
        replicates: 0,
        per_bin: per_bin.iter().map(to_rows).collect(),
        near_zero_rho: near_zero,
        coverage_margin: Some((info.coverage() - required).max(0.0)),
    })
}

/// Range of `ρ_t(σ*)` over the evaluation points, for choosing `z` nodes.
pub fn correlations(model: &DiffusionModel, sigma_star: &[f64], coeff: CoeffPath) -> Vec<f64> {
    match coeff {
        CoeffPath::Constant => vec![model.norms_and_correlation(0.0, model.y0(), sigma_star).2],
        CoeffPath::Simulated(path) => path
            .times
            .iter()
            .zip(&path.values)
            .map(|(&t, &x)| model.norms_and_correlation(t, x, sigma_star).2)
            .collect(),
    }
}

/// Formula route end to end: `z` nodes from the correlations met, information
/// functions averaged over `grids`, then `Γ`.
pub fn gamma_formula_on(
    model: &DiffusionModel,
    sigma_star: &[f64],
    grids: &[ObservationGrid],
    bins: usize,
    coeff: CoeffPath,
) -> Result<(GammaResult, InfoFunctions)> {
    let nodes = z_nodes_for(&correlations(model, sigma_star, coeff))?;
    let info = estimate_info_functions(grids, &nodes, bins)?;
    let g = gamma_formula(model, sigma_star, &info, coeff)?;
    Ok((g, info))
}

/// Mean of `-b_n^{-1} ∂²H(σ*)` over `replicates` freshly drawn (grid, path)
/// pairs. Replicate `r` uses seed `replicate_seed(seed, r)` for both.
pub fn gamma_empirical<G>(
    model: &DiffusionModel,
    sigma_star: &[f64],
    grid_gen: G,
    replicates: usize,
    seed: u64,
) -> Result<GammaResult>
where
    G: Fn(u64) -> Result<ObservationGrid> + Sync,
{
    if replicates < 2 {
        return Err(Error::InvalidArgument("the empirical route needs at least 2 replicates".into()));
    }
    let d = sigma_star.len();
    let draws: Vec<Result<DMatrix<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let s = replicate_seed(seed, r as u64);
            let grid = grid_gen(s)?;
            let path = simulate_path(model, sigma_star, &grid, None, s)?;
            let engine = QuasiLikEngine::new(model.clone(), observe(&path, &grid)?);
            let h = engine.hess_h(sigma_star)?;
            Ok(-h.matrix / grid.bn())
        })
        .collect();
    let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;
    let n = replicates as f64;
    let mean = draws.iter().fold(DMatrix::zeros(d, d), |acc, m| acc + m) / n;
    let var = draws.iter().fold(DMatrix::zeros(d, d), |acc, m| {
        let dev = m - &mean;
        acc + dev.component_mul(&dev)
    }) / (n - 1.0);
    let se = var.map(|v| (v / n).sqrt());
    Ok(GammaResult {
        route: Route::Empirical,
        gamma: to_rows(&mean),
        standard_error: Some(to_rows(&se)),
        replicates,
        per_bin: Vec::new(),
        near_zero_rho: 0,
        coverage_margin: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub sigma: Vec<f64>,
    /// `𝓨(σ; σ*)`, zero at `σ*` and nonpositive for identifiable models.
    pub value: f64,
    /// `-𝓨(σ; σ*) / |σ - σ*|²`.
    pub ratio: f64,
}

/// Diagnostics only: the limit quasi-likelihood contrast `𝓨(σ; σ*)` at each
/// `σ` in `sigmas`.
pub fn identifiability_probe(
    model: &DiffusionModel,
    sigma_star: &[f64],
    info: &InfoFunctions,
    sigmas: &[Vec<f64>],
    coeff: CoeffPath,
) -> Result<Vec<ProbePoint>> {
    let points = time_points(model, info, coeff);
    let gl = gauss_quad::GaussLegendre::new(std::num::NonZeroUsize::new(8).unwrap());
    let pairs = gl.as_node_weight_pairs();
    // ∫_{r0}^{r1} (a(ρ) - a0)/ρ dρ
    let tail_integral = |r0: f64, r1: f64, bin: usize| -> f64 {
        let (mid, half) = (0.5 * (r0 + r1), 0.5 * (r1 - r0));
        pairs
            .iter()
            .map(|&(x, w)| {
                let r = mid + half * x;
                let f = if r.abs() < TAYLOR_RADIUS { info.a2(bin) * r } else { (info.a_at(r, bin) - info.a0(bin)) / r };
                w * half * f
            })
            .sum()
    };
    sigmas
        .iter()
        .map(|s1| {
            let mut value = 0.0;
            for p in &points {
                let (n1s, n2s, rho_s) = model.norms_and_correlation(p.t, p.x, sigma_star);
                let (n1, n2, rho) = model.norms_and_correlation(p.t, p.x, s1);
                let needed = rho.abs().max(rho_s.abs());
                if needed > info.coverage() {
                    return Err(Error::Coverage { required: needed, available: info.coverage() });
                }
                let (b1, b2) = (n1s / n1, n2s / n2);
                let (a0, c0) = (info.a0(p.bin), info.c0(p.bin));
                let a = info.a_at(rho, p.bin);
                let c = info.c_at(rho, p.bin);
                let cross = if rho.abs() >= TAYLOR_RADIUS {
                    (a - a0) * rho_s / rho
                } else {
                    info.a2(p.bin) * rho * rho_s
                };
                let f = -b1 * b1 / 2.0 * a - b2 * b2 / 2.0 * c + b1 * b2 * cross + a0 / 2.0 + c0 / 2.0
                    + a0 * b1.ln()
                    + c0 * b2.ln()
                    + tail_integral(rho_s, rho, p.bin);
                value += f * p.weight;
            }
            let dist2: f64 = s1.iter().zip(sigma_star).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok(ProbePoint { sigma: s1.clone(), value, ratio: if dist2 > 0.0 { -value / dist2 } else { f64::NAN } })
        })
        .collect()
}
