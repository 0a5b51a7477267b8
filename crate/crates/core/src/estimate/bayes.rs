use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::qmle::qmle;
use crate::likelihood::QuasiLikEngine;
use crate::sde::ParamBox;

/// Prior density on the parameter box, up to a constant.
#[derive(Clone)]
pub enum Prior {
    Uniform,
    /// `exp(strength · Σ_j (σ_j - c_j) / w_j)` with box center `c` and widths `w`.
    Tilted { strength: f64 },
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Prior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Prior::Uniform => write!(f, "Uniform"),
            Prior::Tilted { strength } => write!(f, "Tilted({strength})"),
            Prior::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Prior {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "uniform" => Ok(Prior::Uniform),
            "tilted" => Ok(Prior::Tilted { strength: 1.0 }),
            other => Err(Error::InvalidArgument(format!("unknown prior `{other}` (expected uniform or tilted)"))),
        }
    }

    pub fn ln_density(&self, sigma: &[f64], bx: &ParamBox) -> f64 {
        match self {
            Prior::Uniform => 0.0,
            Prior::Tilted { strength } => {
                strength * (0..sigma.len()).map(|j| (sigma[j] - 0.5 * (bx.lower[j] + bx.upper[j])) / bx.width(j)).sum::<f64>()
            }
            Prior::Custom(f) => f(sigma).ln(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BayesOptions {
    /// Gauss–Legendre nodes per dimension; default 41 for `d ≤ 2`, 15 otherwise.
    pub nodes: Option<usize>,
    /// Half-width of the integration region in posterior standard deviations;
    /// default 8 for `d ≤ 2`, 6 otherwise.
    pub half_width_sd: Option<f64>,
    /// Largest acceptable weight on the outermost node layer of a truncated side,
    /// relative to the largest weight; otherwise the region is doubled.
    pub tail_tol: f64,
}

impl Default for BayesOptions {
    fn default() -> Self {
        Self { nodes: None, half_width_sd: None, tail_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesResult {
    pub sigma: Vec<f64>,
    pub region: Vec<(f64, f64)>,
    pub nodes_per_dim: usize,
    pub evaluations: usize,
    pub failed_nodes: usize,
    /// The region was narrowed around the maximizer rather than the whole box.
    pub localized: bool,
}

/// Posterior mean under `exp(H) π` over the box, around a fresh QMLE.
pub fn bayes(engine: &QuasiLikEngine, prior: &Prior) -> Result<BayesResult> {
    let q = qmle(engine)?;
    let neg = engine.hess_h(&q.sigma).ok().map(|h| -h.matrix);
    bayes_around(engine, prior, &q.sigma, neg.as_ref(), &BayesOptions::default())
}

/// Posterior mean by tensor-product Gauss–Legendre quadrature. With a positive
/// definite `-∂²H` at `center` the region is `center ± k·sd` clipped to the box
/// (sd from `(-∂²H)^{-1}`) and doubled while the outer node layers still carry
/// weight; otherwise the whole box is used. Weights are stabilized by
/// subtracting the largest log-weight.
pub fn bayes_around(
    engine: &QuasiLikEngine,
    prior: &Prior,
    center: &[f64],
    neg_hessian: Option<&DMatrix<f64>>,
    opts: &BayesOptions,
) -> Result<BayesResult> {
    let bx = engine.model().param_box();
    let d = bx.dim();
    let nodes = opts.nodes.unwrap_or(if d <= 2 { 41 } else { 15 });
    let k = opts.half_width_sd.unwrap_or(if d <= 2 { 8.0 } else { 6.0 });
    let full: Vec<(f64, f64)> = (0..d).map(|j| (bx.lower[j], bx.upper[j])).collect();
    let sd = neg_hessian.and_then(|n| {
        let inv = n.clone().cholesky()?.inverse();
        let sd: Vec<f64> = (0..d).map(|j| inv[(j, j)].sqrt()).collect();
        sd.iter().all(|v| v.is_finite() && *v > 0.0).then_some(sd)
    });
    let gl = GaussLegendre::new(NonZeroUsize::new(nodes).ok_or_else(|| {
        Error::InvalidArgument("at least one quadrature node is required".into())
    })?);
    let pairs = gl.as_node_weight_pairs();

    let mut evaluations = 0;
    let mut scale = k;
    loop {
        let region: Vec<(f64, f64)> = match &sd {
            Some(sd) => (0..d)
                .map(|j| ((center[j] - scale * sd[j]).max(bx.lower[j]), (center[j] + scale * sd[j]).min(bx.upper[j])))
                .collect(),
            None => full.clone(),
        };
        let localized = region != full;
        let r = integrate(engine, prior, &region, pairs)?;
        evaluations += r.evaluations;
        let truncated_tail = (0..d).any(|j| {
            let lo_cut = region[j].0 > bx.lower[j];
            let hi_cut = region[j].1 < bx.upper[j];
            (lo_cut && r.layer_max[j].0 > opts.tail_tol) || (hi_cut && r.layer_max[j].1 > opts.tail_tol)
        });
        if !truncated_tail || !localized {
            return Ok(BayesResult {
                sigma: r.mean,
                region,
                nodes_per_dim: nodes,
                evaluations,
                failed_nodes: r.failed,
                localized,
            });
        }
        scale *= 2.0;
    }
}

struct Integral {
    mean: Vec<f64>,
    evaluations: usize,
    failed: usize,
    /// Per coordinate, the largest relative weight on the first and last node layers.
    layer_max: Vec<(f64, f64)>,
}

fn integrate(
    engine: &QuasiLikEngine,
    prior: &Prior,
    region: &[(f64, f64)],
    pairs: &[(f64, f64)],
) -> Result<Integral> {
    let bx = engine.model().param_box();
    let d = region.len();
    let m = pairs.len();
    let total = m.pow(d as u32);
    let mut idx = vec![0usize; d];
    let mut logw = Vec::with_capacity(total);
    let mut points = Vec::with_capacity(total);
    let mut failed = 0;
    for _ in 0..total {
        let mut sigma = Vec::with_capacity(d);
        let mut lw = 0.0;
        for j in 0..d {
            let (a, b) = region[j];
            let (x, w) = pairs[idx[j]];
            sigma.push(0.5 * (a + b) + 0.5 * (b - a) * x);
            lw += (0.5 * (b - a) * w).ln();
        }
        let v = match engine.quasi_loglik(&sigma) {
            Ok(h) if h.is_finite() => lw + h + prior.ln_density(&sigma, bx),
            _ => {
                failed += 1;
                f64::NEG_INFINITY
            }
        };
        logw.push((v, idx.clone()));
        points.push(sigma);
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < m {
                break;
            }
            idx[j] = 0;
        }
    }
    if failed == total {
        return Err(Error::Estimation("S(σ) could not be factorized at any quadrature node".into()));
    }
    let top = logw.iter().map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    let mut norm = 0.0;
    let mut mean = vec![0.0; d];
    let mut layer_max = vec![(0.0f64, 0.0f64); d];
    for ((v, ix), p) in logw.iter().zip(&points) {
        let w = (v - top).exp();
        norm += w;
        for j in 0..d {
            mean[j] += w * p[j];
            if ix[j] == 0 {
                layer_max[j].0 = layer_max[j].0.max(w);
            }
            if ix[j] == m - 1 {
                layer_max[j].1 = layer_max[j].1.max(w);
            }
        }
    }
    for (j, v) in mean.iter_mut().enumerate() {
        *v = (*v / norm).clamp(region[j].0, region[j].1);
    }
    Ok(Integral { mean, evaluations: total, failed, layer_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{gen_poisson_grid, gen_uniform_grid};
    use crate::sde::{observe, simulate_path, DiffusionModel, NonsyncSample};

    #[test]
    fn constant_h_uniform_prior_gives_centroid() {
        let g = gen_uniform_grid(10, 10, 0.5, 1.0).unwrap();
        let y: Vec<f64> = (0..11).map(|k| (k as f64).cos()).collect();
        let e = QuasiLikEngine::new(DiffusionModel::builtin("free").unwrap(), NonsyncSample::new(g, y.clone(), y).unwrap());
        let r = bayes(&e, &Prior::Uniform).unwrap();
        assert!(!r.localized);
        assert!((r.sigma[0] - 0.5).abs() < 1e-13);
    }

    #[test]
    fn peaked_posterior_is_near_qmle() {
        let g = gen_poisson_grid(1.0, 1.0, 1.0, 400.0, 3).unwrap();
        let m = DiffusionModel::builtin("bm").unwrap();
        let e = QuasiLikEngine::new(m.clone(), observe(&simulate_path(&m, &[1.2], &g, None, 3).unwrap(), &g).unwrap());
        let q = qmle(&e).unwrap();
        let r = bayes(&e, &Prior::Uniform).unwrap();
        assert!(r.localized);
        let spacing = (r.region[0].1 - r.region[0].0) / r.nodes_per_dim as f64;
        assert!((r.sigma[0] - q.sigma[0]).abs() <= 10.0 * spacing);
        // the mean of a near-Gaussian posterior sits within a small fraction of sd of the mode
        let sd = (r.region[0].1 - r.region[0].0) / 16.0;
        assert!((r.sigma[0] - q.sigma[0]).abs() < 0.2 * sd);
        assert!(r.sigma[0] >= r.region[0].0 && r.sigma[0] <= r.region[0].1);
    }

    #[test]
    fn scalar_posterior_mean_matches_closed_form() {
        // S = σ² I, so the flat-prior posterior is ∝ σ^{-ℓ} exp(-Q / 2σ²) with mean
        // √(Q/2) Γ((ℓ-2)/2) / Γ((ℓ-1)/2) when the box tails are negligible
        use statrs::function::gamma::ln_gamma;
        let g = gen_poisson_grid(1.0, 1.3, 1.0, 150.0, 12).unwrap();
        let m = DiffusionModel::builtin("bm").unwrap();
        let e = QuasiLikEngine::new(m.clone(), observe(&simulate_path(&m, &[1.4], &g, None, 12).unwrap(), &g).unwrap());
        let q: f64 = e.sample().z().iter().map(|v| v * v).sum();
        let ell = (g.l1() + g.l2()) as f64;
        let exact = (q / 2.0).sqrt() * (ln_gamma((ell - 2.0) / 2.0) - ln_gamma((ell - 1.0) / 2.0)).exp();
        let r = bayes(&e, &Prior::Uniform).unwrap();
        assert!((r.sigma[0] - exact).abs() < 1e-9 * exact, "{} vs {exact}", r.sigma[0]);
    }

    #[test]
    fn localized_matches_full_box_quadrature() {
        let g = gen_poisson_grid(1.0, 1.0, 1.0, 60.0, 8).unwrap();
        let m = DiffusionModel::builtin("state").unwrap();
        let e = QuasiLikEngine::new(m.clone(), observe(&simulate_path(&m, &[1.0, 0.7], &g, None, 8).unwrap(), &g).unwrap());
        let local = bayes(&e, &Prior::Tilted { strength: 1.0 }).unwrap();
        let full = bayes_around(&e, &Prior::Tilted { strength: 1.0 }, &[0.0, 0.0], None, &BayesOptions {
            nodes: Some(121),
            ..Default::default()
        })
        .unwrap();
        assert!(!full.localized);
        for j in 0..2 {
            assert!((local.sigma[j] - full.sigma[j]).abs() < 1e-4, "{:?} vs {:?}", local.sigma, full.sigma);
        }
    }

    #[test]
    fn prior_names() {
        assert!(matches!(Prior::from_name("uniform"), Ok(Prior::Uniform)));
        assert!(Prior::from_name("flat").is_err());
    }
}
