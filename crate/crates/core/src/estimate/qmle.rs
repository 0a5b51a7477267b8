use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::optimize::{nelder_mead_max, pattern_search_max, Maximum, NelderMeadOptions};
use crate::likelihood::QuasiLikEngine;

#[derive(Debug, Clone)]
pub struct QmleOptions {
    pub nelder_mead: NelderMeadOptions,
    /// Overrides the default `2d + 1` starts (box center and face midpoints).
    pub starts: Option<Vec<Vec<f64>>>,
    /// Simplex tolerance used when screening starts.
    pub screen_xtol: f64,
    pub newton_steps: usize,
}

impl Default for QmleOptions {
    fn default() -> Self {
        Self { nelder_mead: NelderMeadOptions::default(), starts: None, screen_xtol: 1e-3, newton_steps: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmleResult {
    pub sigma: Vec<f64>,
    pub value: f64,
    pub on_boundary: bool,
    /// `H` took the same value at every start and at the optimum.
    pub degenerate: bool,
    pub starts: usize,
    pub failed_starts: usize,
    pub best_start: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub newton_steps: usize,
}

pub fn qmle(engine: &QuasiLikEngine) -> Result<QmleResult> {
    qmle_with(engine, &QmleOptions::default())
}

/// Maximizes `H` over the closed box: multi-start Nelder–Mead (coarse screening of
/// every start, fine search from the best), then projected
/// coordinate search, then Newton steps from finite-difference derivatives
/// while the optimum is interior and `-∂²H` is positive definite.
pub fn qmle_with(engine: &QuasiLikEngine, opts: &QmleOptions) -> Result<QmleResult> {
    let bx = engine.model().param_box().clone();
    let evals = Cell::new(0usize);
    let f = |s: &[f64]| {
        evals.set(evals.get() + 1);
        engine.quasi_loglik(s).ok()
    };
    let starts = opts.starts.clone().unwrap_or_else(|| bx.start_points());
    // screen every start with a coarse simplex, then refine the best one
    let screen = NelderMeadOptions { xtol: opts.screen_xtol.max(opts.nelder_mead.xtol), ..opts.nelder_mead };
    let mut best: Option<(usize, Maximum)> = None;
    let mut failed = 0;
    let mut start_values = Vec::new();
    for (k, start) in starts.iter().enumerate() {
        if let Some(v) = f(start) {
            start_values.push(v);
        }
        match nelder_mead_max(&f, start, &bx, &screen) {
            // strict improvement only: ties keep the earliest start
            Some(m) if best.as_ref().is_none_or(|(_, b)| m.value > b.value) => best = Some((k, m)),
            Some(_) => {}
            None => failed += 1,
        }
    }
    let (best_start, coarse) = best.ok_or_else(|| {
        Error::Estimation(format!("S(σ) could not be factorized from any of {} starts", starts.len()))
    })?;
    let fine_opts = NelderMeadOptions { initial_step: 10.0 * screen.xtol, ..opts.nelder_mead };
    let m = match nelder_mead_max(&f, &coarse.x, &bx, &fine_opts) {
        Some(m) if m.value >= coarse.value => m,
        _ => coarse,
    };
    let converged = m.converged;
    let m = pattern_search_max(&f, m, &bx, 1e-4, 1e-9);
    let (mut x, mut value) = (m.x, m.value);

    let mut steps = 0;
    for _ in 0..opts.newton_steps {
        let Ok(h) = engine.hess_h(&x) else { break };
        if h.one_sided {
            break;
        }
        let Ok(g) = engine.grad_h(&x) else { break };
        let neg = -h.matrix;
        let Some(chol) = neg.clone().cholesky() else { break };
        let delta = chol.solve(&DVector::from_vec(g.values));
        let local = (0..x.len()).all(|j| delta[j].abs() <= 1e-2 * bx.width(j));
        let y: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
        if !local || !bx.contains(&y) {
            break;
        }
        let Some(v) = f(&y) else { break };
        if v < value - 1e-10 * (1.0 + value.abs()) {
            break;
        }
        let size = (0..x.len()).map(|j| delta[j].abs() / bx.width(j)).fold(0.0, f64::max);
        x = y;
        value = v.max(value);
        steps += 1;
        if size < 1e-12 {
            break;
        }
    }

    let on_boundary = (0..x.len()).any(|j| {
        let tol = 1e-6 * bx.width(j);
        x[j] - bx.lower[j] <= tol || bx.upper[j] - x[j] <= tol
    });
    let tol = 1e-12 * (1.0 + value.abs());
    let degenerate = start_values.len() == starts.len() && start_values.iter().all(|v| (v - value).abs() <= tol);
    Ok(QmleResult {
        sigma: x,
        value,
        on_boundary,
        degenerate,
        starts: starts.len(),
        failed_starts: failed,
        best_start,
        evaluations: evals.get(),
        converged,
        newton_steps: steps,
    })
}

/// Symmetric square root by eigendecomposition, or `None` unless the matrix is
/// positive definite with `λ_min > 1e-12 λ_max`.
pub fn sqrt_pd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || !(min > 1e-12 * max) {
        return None;
    }
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Some(&eig.eigenvectors * root * eig.eigenvectors.transpose())
}
