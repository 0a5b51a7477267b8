//! QMLE, Bayes-type estimator, observed information and covariation estimators.

mod bayes;
mod covariation;
mod optimize;
mod qmle;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use bayes::{bayes, bayes_around, BayesOptions, BayesResult, Prior};
pub use covariation::{hayashi_yoshida, plugin_covariation};
pub use optimize::{nelder_mead_max, pattern_search_max, Maximum, NelderMeadOptions};
pub use qmle::{qmle, qmle_with, sqrt_pd, QmleOptions, QmleResult};

use crate::error::{Error, Result};
use crate::likelihood::QuasiLikEngine;

/// `Γ_n = -b_n^{-1} ∂²H` and `𝓝_n = (-∂²H)^{-1/2} ∂H` on the positive definite
/// event; `Γ_n = I`, `𝓝_n = 0` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedInfo {
    pub sigma: Vec<f64>,
    pub gamma: DMatrix<f64>,
    pub score: DVector<f64>,
    pub neg_hessian: DMatrix<f64>,
    /// `(-∂²H)^{1/2}` when positive definite.
    pub root: Option<DMatrix<f64>>,
    pub positive_definite: bool,
    pub one_sided: bool,
}

impl ObservedInfo {
    /// `√b_n Γ_n^{1/2} (σ - σ_ref) = (-∂²H)^{1/2} (σ - σ_ref)`; zero off the PD event.
    pub fn studentize(&self, sigma: &[f64], reference: &[f64]) -> Vec<f64> {
        match &self.root {
            Some(r) => {
                let diff = DVector::from_iterator(sigma.len(), sigma.iter().zip(reference).map(|(a, b)| a - b));
                (r * diff).as_slice().to_vec()
            }
            None => vec![0.0; sigma.len()],
        }
    }
}

pub fn observed_info(engine: &QuasiLikEngine, sigma: &[f64]) -> Result<ObservedInfo> {
    let h = engine.hess_h(sigma)?;
    if h.matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite Hessian at sigma = {sigma:?}")));
    }
    let d = sigma.len();
    let neg = -h.matrix;
    let root = sqrt_pd(&neg);
    let bn = engine.grid().bn();
    let (gamma, score) = match &root {
        Some(r) => {
            let g = engine.grad_h(sigma)?;
            let inv_root = r.clone().try_inverse().ok_or_else(|| Error::Numerical("singular square root".into()))?;
            (&neg / bn, inv_root * DVector::from_vec(g.values))
        }
        None => {
            log::warn!("-∂²H is not positive definite at {sigma:?}; using the identity fallback");
            (DMatrix::identity(d, d), DVector::zeros(d))
        }
    };
    Ok(ObservedInfo {
        sigma: sigma.to_vec(),
        gamma,
        score,
        neg_hessian: neg,
        positive_definite: root.is_some(),
        root,
        one_sided: h.one_sided,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub starts: usize,
    pub failed_starts: usize,
    pub best_start: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub newton_steps: usize,
    pub h_max: f64,
    pub bayes_evaluations: usize,
    pub bayes_localized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationOutcome {
    pub model: String,
    pub sigma_hat: Vec<f64>,
    pub sigma_tilde: Option<Vec<f64>>,
    /// Point at which `Γ_n` and `𝓝_n` were evaluated.
    pub info_at: Vec<f64>,
    pub gamma_n: Vec<Vec<f64>>,
    pub score_n: Vec<f64>,
    pub on_boundary: bool,
    pub degenerate: bool,
    /// `-∂²H` was not positive definite; `Γ_n = I`, `𝓝_n = 0`.
    pub gamma_fallback: bool,
    pub hy_covariation: f64,
    pub plugin_covariation: f64,
    pub diagnostics: OptimizerSummary,
}

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub qmle: QmleOptions,
    /// `None` skips the Bayes-type estimator.
    pub prior: Option<Prior>,
    pub bayes: BayesOptions,
    /// Evaluate `Γ_n`, `𝓝_n` here instead of at `σ̂`.
    pub info_at: Option<Vec<f64>>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { qmle: QmleOptions::default(), prior: Some(Prior::Uniform), bayes: BayesOptions::default(), info_at: None }
    }
}

/// Everything for one sample: `σ̂`, optionally `σ̃`, `(Γ_n, 𝓝_n)`, HY and plug-in covariation.
pub fn estimate(engine: &QuasiLikEngine, opts: &EstimateOptions) -> Result<(EstimationOutcome, ObservedInfo)> {
    let q = qmle_with(engine, &opts.qmle)?;
    let at = opts.info_at.clone().unwrap_or_else(|| q.sigma.clone());
    let info = observed_info(engine, &at)?;
    let (tilde, b_evals, b_local) = match &opts.prior {
        Some(prior) => {
            let neg = if at == q.sigma {
                info.neg_hessian.clone()
            } else {
                -engine.hess_h(&q.sigma)?.matrix
            };
            let b = bayes_around(engine, prior, &q.sigma, Some(&neg), &opts.bayes)?;
            (Some(b.sigma), b.evaluations, b.localized)
        }
        None => (None, 0, false),
    };
    let d = at.len();
    let outcome = EstimationOutcome {
        model: engine.model().name().to_string(),
        plugin_covariation: plugin_covariation(engine.model(), &q.sigma, engine.sample()),
        hy_covariation: hayashi_yoshida(engine.sample()),
        sigma_hat: q.sigma,
        sigma_tilde: tilde,
        info_at: at,
        gamma_n: (0..d).map(|i| (0..d).map(|j| info.gamma[(i, j)]).collect()).collect(),
        score_n: info.score.as_slice().to_vec(),
        on_boundary: q.on_boundary,
        degenerate: q.degenerate,
        gamma_fallback: !info.positive_definite,
        diagnostics: OptimizerSummary {
            starts: q.starts,
            failed_starts: q.failed_starts,
            best_start: q.best_start,
            evaluations: q.evaluations,
            converged: q.converged,
            newton_steps: q.newton_steps,
            h_max: q.value,
            bayes_evaluations: b_evals,
            bayes_localized: b_local,
        },
    };
    Ok((outcome, info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::gen_uniform_grid;
    use crate::sde::{observe, simulate_path, DiffusionModel, NonsyncSample};

    #[test]
    fn sigma_free_model_takes_fallback() {
        let g = gen_uniform_grid(10, 10, 0.3, 1.0).unwrap();
        let y: Vec<f64> = (0..11).map(|k| (k as f64).sin()).collect();
        let e = QuasiLikEngine::new(DiffusionModel::builtin("free").unwrap(), NonsyncSample::new(g, y.clone(), y).unwrap());
        let info = observed_info(&e, &[0.5]).unwrap();
        assert!(!info.positive_definite);
        assert_eq!(info.gamma, DMatrix::identity(1, 1));
        assert_eq!(info.score, DVector::zeros(1));
    }

    #[test]
    fn scalar_observed_info_closed_form() {
        let n = 300;
        let g = gen_uniform_grid(n, n, 0.0, 1.0).unwrap().with_bn(n as f64).unwrap();
        let m = DiffusionModel::builtin("bm").unwrap();
        let e = QuasiLikEngine::new(m.clone(), observe(&simulate_path(&m, &[0.9], &g, None, 4).unwrap(), &g).unwrap());
        let q = qmle(&e).unwrap();
        let s = q.sigma[0];
        let info = observed_info(&e, &q.sigma).unwrap();
        let expect = 4.0 * n as f64 / (s * s);
        assert!((info.neg_hessian[(0, 0)] - expect).abs() < 1e-5 * expect);
        assert!((info.gamma[(0, 0)] - 4.0 / (s * s)).abs() < 1e-5 * expect / n as f64);
        // score vanishes at the maximizer
        assert!(info.score[0].abs() < 1e-4);
    }

    #[test]
    fn full_estimate_serializes() {
        let g = gen_uniform_grid(40, 30, 0.5, 1.0).unwrap();
        let m = DiffusionModel::builtin("corr").unwrap();
        let e = QuasiLikEngine::new(m.clone(), observe(&simulate_path(&m, &[1.0, 0.8, 0.6], &g, None, 4).unwrap(), &g).unwrap());
        let (out, _) = estimate(&e, &EstimateOptions::default()).unwrap();
        let text = serde_json::to_string(&out).unwrap();
        let back: EstimationOutcome = serde_json::from_str(&text).unwrap();
        assert_eq!(back, out);
        assert!(e.model().param_box().contains(out.sigma_tilde.as_ref().unwrap()));
        assert!(e.model().param_box().contains(&out.sigma_hat));
    }
}
