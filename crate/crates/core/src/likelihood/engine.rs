use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::banded::{EnvelopeCholesky, EnvelopeMatrix};
use crate::error::{Error, Result};
use crate::likelihood::cov::{CoefficientPoints, StructuredCov};
use crate::scheme::{ObservationGrid, OverlapMatrix, Side};
use crate::sde::{dot, DiffusionModel, NonsyncSample, Vec2};

/// Half-bandwidth of the Schur complement above which evaluation falls back to dense.
pub const BANDWIDTH_THRESHOLD: usize = 128;

const GRAD_STEP: f64 = 1e-5;
const HESS_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Banded,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    FiniteDifference,
    Analytic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
    /// Some coordinate was differenced one-sidedly because of the box boundary.
    pub one_sided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hessian {
    pub matrix: DMatrix<f64>,
    pub one_sided: bool,
}

/// Factorized `S(σ)` together with `H(σ)` and `x = S^{-1} Z`.
struct Factorization {
    sigma: Vec<f64>,
    /// Absent on the constant-coefficient fast path; rebuilt on demand.
    cov: Option<StructuredCov>,
    value: f64,
    /// `S^{-1} Z` in the full `(side 1, side 2)` ordering, solved on first use.
    x: OnceLock<Vec<f64>>,
    kind: FactorKind,
}

enum FactorKind {
    /// `w = L^{-1} y` with `y = z_k - Vᵀ D_e^{-1} z_e` and `C = L Lᵀ`.
    Banded { keep: Side, chol: EnvelopeCholesky, w: Vec<f64>, elim: ElimPart },
    Dense { chol: nalgebra::Cholesky<f64, nalgebra::Dyn> },
}

enum ElimPart {
    /// Coupling aligned with `G.runs(elim)`; the eliminated diagonal lives in `cov`.
    Explicit { coupling: Vec<f64> },
    /// Constant coefficients: `D_e = α I`, `V = γ G`.
    Scaled { alpha: f64, gamma: f64 },
}

/// σ-free pieces of the Schur complement for constant coefficients.
struct ConstantParts {
    /// `Σ_e g_e g_eᵀ` over eliminated intervals, on the kept side.
    gram: EnvelopeMatrix,
    /// `Σ_e g_e z_e`.
    g_z: Vec<f64>,
    z_elim_sq: f64,
}

impl ConstantParts {
    fn new(overlap: &OverlapMatrix, keep: Side, z: &[f64]) -> Self {
        let elim = keep.other();
        let runs = overlap.runs(elim);
        let n_keep = overlap.intervals(keep);
        let gram = overlap
            .schur_complement(keep, &vec![0.0; n_keep], &vec![1.0; runs.len()], &runs.vals)
            .affine(-1.0, 0.0);
        let z_e = match elim {
            Side::First => &z[..overlap.l1()],
            Side::Second => &z[overlap.l1()..],
        };
        let mut g_z = vec![0.0; n_keep];
        for (e, ze) in z_e.iter().enumerate() {
            let (f, g) = runs.run(e);
            for (kk, v) in g.iter().enumerate() {
                g_z[f + kk] += v * ze;
            }
        }
        Self { gram, g_z, z_elim_sq: z_e.iter().map(|v| v * v).sum() }
    }
}

/// Evaluates `H(σ) = -½ Zᵀ S(σ)^{-1} Z - ½ log det S(σ)` for one sample.
pub struct QuasiLikEngine {
    model: DiffusionModel,
    sample: NonsyncSample,
    overlap: OverlapMatrix,
    points: CoefficientPoints,
    keep: Side,
    schur_bandwidth: usize,
    constant: Option<ConstantParts>,
    mode: EvalMode,
    grad_mode: GradMode,
    cross_check: bool,
    cache: Mutex<Option<Arc<Factorization>>>,
}

impl std::fmt::Debug for QuasiLikEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuasiLikEngine")
            .field("model", &self.model.name())
            .field("l1", &self.overlap.l1())
            .field("l2", &self.overlap.l2())
            .field("schur_bandwidth", &self.schur_bandwidth)
            .field("mode", &self.mode)
            .field("grad_mode", &self.grad_mode)
            .finish()
    }
}

impl QuasiLikEngine {
    pub fn new(model: DiffusionModel, sample: NonsyncSample) -> Self {
        let overlap = OverlapMatrix::new(sample.grid());
        let points = CoefficientPoints::new(&sample);
        // eliminate the larger block, factor the smaller one
        let keep = if overlap.l1() < overlap.l2() { Side::First } else { Side::Second };
        let elim = overlap.runs(keep.other());
        let keep_runs = overlap.runs(keep);
        let schur_bandwidth = (0..keep_runs.len())
            .map(|k| k - elim.first[keep_runs.first[k]].min(k))
            .max()
            .unwrap_or(0);
        let mode = if schur_bandwidth > BANDWIDTH_THRESHOLD {
            log::warn!(
                "Schur complement bandwidth {schur_bandwidth} exceeds {BANDWIDTH_THRESHOLD}; using dense factorization"
            );
            EvalMode::Dense
        } else {
            EvalMode::Banded
        };
        let constant = model.is_constant().then(|| ConstantParts::new(&overlap, keep, sample.z()));
        Self {
            model,
            sample,
            overlap,
            points,
            keep,
            schur_bandwidth,
            constant,
            mode,
            grad_mode: GradMode::FiniteDifference,
            cross_check: false,
            cache: Mutex::new(None),
        }
    }

    pub fn with_mode(mut self, mode: EvalMode) -> Self {
        self.mode = mode;
        self.clear_cache();
        self
    }

    pub fn with_grad_mode(mut self, grad_mode: GradMode) -> Result<Self> {
        if grad_mode == GradMode::Analytic && !self.model.has_analytic_dsigma() {
            return Err(Error::InvalidArgument(format!(
                "model `{}` has no analytic diffusion derivative",
                self.model.name()
            )));
        }
        self.grad_mode = grad_mode;
        Ok(self)
    }

    /// Re-evaluates every banded value densely and fails on disagreement.
    pub fn with_cross_check(mut self, on: bool) -> Self {
        self.cross_check = on;
        self
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    pub fn sample(&self) -> &NonsyncSample {
        &self.sample
    }

    pub fn grid(&self) -> &ObservationGrid {
        self.sample.grid()
    }

    pub fn overlap(&self) -> &OverlapMatrix {
        &self.overlap
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }

    pub fn grad_mode(&self) -> GradMode {
        self.grad_mode
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn schur_bandwidth(&self) -> usize {
        self.schur_bandwidth
    }

    pub fn clear_cache(&self) {
        *self.cache.lock().unwrap_or_else(|e| e.into_inner()) = None;
    }

    pub fn build_s(&self, sigma: &[f64]) -> Result<StructuredCov> {
        StructuredCov::from_points(&self.model, sigma, &self.points, &self.overlap)
    }

    /// `H(σ)` in the engine's mode.
    pub fn quasi_loglik(&self, sigma: &[f64]) -> Result<f64> {
        Ok(self.factorize(sigma)?.value)
    }

    /// `H(σ)` by dense Cholesky of the full `S(σ)`, bypassing the cache.
    pub fn quasi_loglik_dense(&self, sigma: &[f64]) -> Result<f64> {
        let cov = self.build_s(sigma)?;
        Ok(self.dense_factorization(sigma, cov)?.value)
    }

    fn factorize(&self, sigma: &[f64]) -> Result<Arc<Factorization>> {
        if let Some(f) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).as_ref() {
            if f.sigma == sigma {
                return Ok(f.clone());
            }
        }
        let f = match (self.mode, &self.constant) {
            (EvalMode::Banded, Some(parts)) => self.constant_factorization(sigma, parts)?,
            (EvalMode::Banded, None) => self.banded_factorization(sigma, self.build_s(sigma)?)?,
            (EvalMode::Dense, _) => self.dense_factorization(sigma, self.build_s(sigma)?)?,
        };
        if self.cross_check && self.mode == EvalMode::Banded {
            let dense = self.quasi_loglik_dense(sigma)?;
            if (f.value - dense).abs() > 1e-8 * (1.0 + dense.abs()) {
                return Err(Error::Numerical(format!(
                    "banded H = {} disagrees with dense H = {dense} at sigma = {sigma:?}",
                    f.value
                )));
            }
        }
        let f = Arc::new(f);
        *self.cache.lock().unwrap_or_else(|e| e.into_inner()) = Some(f.clone());
        Ok(f)
    }

    fn offset(&self, side: Side) -> usize {
        match side {
            Side::First => 0,
            Side::Second => self.overlap.l1(),
        }
    }

    fn z_side(&self, side: Side) -> &[f64] {
        let z = self.sample.z();
        let l1 = self.overlap.l1();
        match side {
            Side::First => &z[..l1],
            Side::Second => &z[l1..],
        }
    }

    fn banded_factorization(&self, sigma: &[f64], cov: StructuredCov) -> Result<Factorization> {
        let keep = self.keep;
        let elim = keep.other();
        let d_e = cov.diag(elim);
        let d_k = cov.diag(keep);
        if let Some(e) = d_e.iter().position(|d| !(*d > 0.0)) {
            return Err(Error::NotPositiveDefinite { pivot: self.offset(elim) + e });
        }
        let coupling = cov.coupling_along(&self.overlap, elim);
        let c = self.overlap.schur_complement(keep, d_k, d_e, &coupling);
        let chol = c.cholesky().map_err(|k| Error::NotPositiveDefinite { pivot: self.offset(keep) + k })?;

        let runs = self.overlap.runs(elim);
        let z_e = self.z_side(elim);
        let z_k = self.z_side(keep);
        let mut y = z_k.to_vec();
        let mut quad = 0.0;
        let mut logdet = chol.log_det();
        for e in 0..runs.len() {
            let w = z_e[e] / d_e[e];
            quad += z_e[e] * w;
            logdet += d_e[e].ln();
            let f = runs.first[e];
            for (kk, v) in coupling[runs.range(e)].iter().enumerate() {
                y[f + kk] -= v * w;
            }
        }
        chol.forward(&mut y);
        quad += y.iter().map(|v| v * v).sum::<f64>();
        Ok(Factorization {
            sigma: sigma.to_vec(),
            cov: Some(cov),
            value: -0.5 * quad - 0.5 * logdet,
            x: OnceLock::new(),
            kind: FactorKind::Banded { keep, chol, w: y, elim: ElimPart::Explicit { coupling } },
        })
    }

    /// Constant `b`: `C = β I - (γ²/α) Σ_e g_e g_eᵀ` with the Gram part precomputed.
    fn constant_factorization(&self, sigma: &[f64], parts: &ConstantParts) -> Result<Factorization> {
        let model = &self.model;
        model.param_box().check(sigma)?;
        let b = model.diffusion(0.0, model.y0(), sigma);
        if b.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite diffusion coefficient at sigma = {sigma:?}")));
        }
        let keep = self.keep;
        let elim = keep.other();
        let (b_e, b_k) = match elim {
            Side::First => (b[0], b[1]),
            Side::Second => (b[1], b[0]),
        };
        let (alpha, beta, gamma) = (dot(b_e, b_e), dot(b_k, b_k), dot(b[0], b[1]));
        let runs = self.overlap.runs(elim);
        if !(alpha > 0.0) && !runs.is_empty() {
            return Err(Error::NotPositiveDefinite { pivot: self.offset(elim) });
        }
        let c = parts.gram.affine(-gamma * gamma / alpha, beta);
        let chol = c.cholesky().map_err(|k| Error::NotPositiveDefinite { pivot: self.offset(keep) + k })?;
        let r = gamma / alpha;
        let y: Vec<f64> = self.z_side(keep).iter().zip(&parts.g_z).map(|(z, w)| z - r * w).collect();
        let mut w = y;
        chol.forward(&mut w);
        let quad = parts.z_elim_sq / alpha + w.iter().map(|v| v * v).sum::<f64>();
        let logdet = runs.len() as f64 * alpha.ln() + chol.log_det();
        Ok(Factorization {
            sigma: sigma.to_vec(),
            cov: None,
            value: -0.5 * quad - 0.5 * logdet,
            x: OnceLock::new(),
            kind: FactorKind::Banded { keep, chol, w, elim: ElimPart::Scaled { alpha, gamma } },
        })
    }

    /// `x = S^{-1} Z`: `x_k = C^{-1} y`, `x_e = D_e^{-1} (z_e - V x_k)`.
    fn solution<'a>(&self, f: &'a Factorization, cov: &StructuredCov) -> &'a [f64] {
        f.x.get_or_init(|| {
            let FactorKind::Banded { keep, chol, w, elim } = &f.kind else {
                unreachable!("dense factorizations store x eagerly")
            };
            let mut x_k = w.clone();
            chol.backward(&mut x_k);
            let side_e = keep.other();
            let runs = self.overlap.runs(side_e);
            let z_e = self.z_side(side_e);
            let x_e: Vec<f64> = (0..runs.len())
                .map(|e| {
                    let (first, g) = runs.run(e);
                    let (vals, scale, d) = match elim {
                        ElimPart::Explicit { coupling } => (&coupling[runs.range(e)], 1.0, cov.diag(side_e)[e]),
                        ElimPart::Scaled { alpha, gamma } => (g, *gamma, *alpha),
                    };
                    let vx: f64 = vals.iter().enumerate().map(|(kk, v)| v * x_k[first + kk]).sum();
                    (z_e[e] - scale * vx) / d
                })
                .collect();
            match keep {
                Side::First => [x_k, x_e].concat(),
                Side::Second => [x_e, x_k].concat(),
            }
        })
    }

    fn dense_factorization(&self, sigma: &[f64], cov: StructuredCov) -> Result<Factorization> {
        let s = cov.to_dense(&self.overlap);
        let chol = match nalgebra::Cholesky::new(s.clone()) {
            Some(c) => c,
            None => return Err(Error::NotPositiveDefinite { pivot: dense_failing_pivot(&s) }),
        };
        let z = DVector::from_column_slice(self.sample.z());
        let x = chol.solve(&z);
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let value = -0.5 * z.dot(&x) - 0.5 * logdet;
        Ok(Factorization { sigma: sigma.to_vec(), cov: Some(cov), value, x: OnceLock::from(x.as_slice().to_vec()), kind: FactorKind::Dense { chol } })
    }

    /// `∂_σ H` in the engine's gradient mode.
    pub fn grad_h(&self, sigma: &[f64]) -> Result<Gradient> {
        match self.grad_mode {
            GradMode::FiniteDifference => self.grad_fd(sigma),
            GradMode::Analytic => self.grad_analytic(sigma).map(|values| Gradient { values, one_sided: false }),
        }
    }

    /// Central differences with `h_j = 1e-5 max(1, |σ_j|)`; second-order one-sided
    /// differences where the central stencil would leave the box.
    pub fn grad_fd(&self, sigma: &[f64]) -> Result<Gradient> {
        let bx = self.model.param_box();
        let f0 = self.quasi_loglik(sigma)?;
        let mut values = Vec::with_capacity(sigma.len());
        let mut one_sided = false;
        for j in 0..sigma.len() {
            let h = GRAD_STEP * sigma[j].abs().max(1.0);
            let at = |delta: f64| -> Result<f64> {
                let mut s = sigma.to_vec();
                s[j] += delta;
                self.quasi_loglik(&s)
            };
            let up = sigma[j] + h <= bx.upper[j];
            let down = sigma[j] - h >= bx.lower[j];
            let g = if up && down {
                (at(h)? - at(-h)?) / (2.0 * h)
            } else if up {
                one_sided = true;
                (-3.0 * f0 + 4.0 * at(h)? - at(2.0 * h)?) / (2.0 * h)
            } else if down {
                one_sided = true;
                (3.0 * f0 - 4.0 * at(-h)? + at(-2.0 * h)?) / (2.0 * h)
            } else {
                return Err(Error::InvalidArgument(format!("parameter box too narrow in coordinate {j}")));
            };
            values.push(g);
        }
        if one_sided {
            log::warn!("one-sided differences used for the gradient at {sigma:?}");
        }
        Ok(Gradient { values, one_sided })
    }

    /// `∂H = ½ xᵀ ∂S x - ½ tr(S^{-1} ∂S)` with `x = S^{-1} Z`; the trace only needs
    /// `S^{-1}` on the pattern of `S`, taken from the selected inverse of the
    /// Schur complement.
    pub fn grad_analytic(&self, sigma: &[f64]) -> Result<Vec<f64>> {
        if !self.model.has_analytic_dsigma() {
            return Err(Error::InvalidArgument(format!(
                "model `{}` has no analytic diffusion derivative",
                self.model.name()
            )));
        }
        let f = self.factorize(sigma)?;
        let rebuilt;
        let cov = match &f.cov {
            Some(c) => c,
            None => {
                rebuilt = self.build_s(sigma)?;
                &rebuilt
            }
        };
        let (db1, db2) = self.coefficient_derivatives(sigma, cov);
        let d = sigma.len();
        let l1 = cov.l1();
        let x = self.solution(&f, cov);
        let (x1, x2) = x.split_at(l1);
        let rows = self.overlap.runs(Side::First);

        // weights: ∂H = ½ [Σ_i a1_i ∂d1_i + Σ_j a2_j ∂d2_j + Σ_(i,j) c_ij ∂V_ij]
        let (a1, a2, c_rows) = match &f.kind {
            FactorKind::Banded { keep, chol, elim, .. } => {
                let coupling = match elim {
                    ElimPart::Explicit { coupling } => coupling.clone(),
                    ElimPart::Scaled { .. } => cov.coupling_along(&self.overlap, keep.other()),
                };
                self.banded_trace_weights(*keep, chol, &coupling, cov, x1, x2)
            }
            FactorKind::Dense { chol } => {
                let inv = chol.inverse();
                let a1: Vec<f64> = (0..l1).map(|i| x1[i] * x1[i] - inv[(i, i)]).collect();
                let a2: Vec<f64> = (0..cov.l2()).map(|j| x2[j] * x2[j] - inv[(l1 + j, l1 + j)]).collect();
                let mut c = Vec::with_capacity(rows.vals.len());
                for i in 0..l1 {
                    let first = rows.first[i];
                    for jj in 0..rows.range(i).len() {
                        let j = first + jj;
                        c.push(2.0 * (x1[i] * x2[j] - inv[(i, l1 + j)]));
                    }
                }
                (a1, a2, c)
            }
        };

        let mut grad = vec![0.0; d];
        for (m, g) in grad.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..l1 {
                acc += a1[i] * 2.0 * dot(cov.b1[i], db1[i][m]);
            }
            for j in 0..cov.l2() {
                acc += a2[j] * 2.0 * dot(cov.b2[j], db2[j][m]);
            }
            for i in 0..l1 {
                let (first, g_run) = rows.run(i);
                let base = rows.ptr[i];
                for (jj, gij) in g_run.iter().enumerate() {
                    let j = first + jj;
                    let dv = (dot(db1[i][m], cov.b2[j]) + dot(cov.b1[i], db2[j][m])) * gij;
                    acc += c_rows[base + jj] * dv;
                }
            }
            *g = 0.5 * acc;
        }
        Ok(grad)
    }

    /// Per-entry weights `x x - S^{-1}` on the pattern of `S`, ordered by side and
    /// with the off-diagonal weights aligned to `G`'s rows (doubled for symmetry).
    fn banded_trace_weights(
        &self,
        keep: Side,
        chol: &EnvelopeCholesky,
        coupling: &[f64],
        cov: &StructuredCov,
        x1: &[f64],
        x2: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let elim = keep.other();
        let sigma_c = chol.selected_inverse();
        let runs = self.overlap.runs(elim);
        let d_e = cov.diag(elim);
        let (x_k, x_e) = match keep {
            Side::First => (x1, x2),
            Side::Second => (x2, x1),
        };
        let a_k: Vec<f64> = (0..x_k.len()).map(|k| x_k[k] * x_k[k] - sigma_c.get(k, k)).collect();
        let mut a_e = Vec::with_capacity(runs.len());
        // off-diagonal weights aligned with runs(elim)
        let mut c_e = vec![0.0; coupling.len()];
        let mut w = Vec::new();
        for e in 0..runs.len() {
            let first = runs.first[e];
            let v = &coupling[runs.range(e)];
            w.clear();
            for a in 0..v.len() {
                let s: f64 = v.iter().enumerate().map(|(b, vb)| vb * sigma_c.get(first + b, first + a)).sum();
                w.push(s);
            }
            let inv_d = 1.0 / d_e[e];
            let see = inv_d + inv_d * inv_d * v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            a_e.push(x_e[e] * x_e[e] - see);
            for (a, wa) in w.iter().enumerate() {
                let sek = -inv_d * wa;
                c_e[runs.ptr[e] + a] = 2.0 * (x_e[e] * x_k[first + a] - sek);
            }
        }
        match keep {
            Side::Second => (a_e, a_k, c_e),
            Side::First => {
                // re-align column-oriented weights to G's rows
                let rows = self.overlap.runs(Side::First);
                let mut c_rows = vec![0.0; rows.vals.len()];
                for j in 0..runs.len() {
                    let first = runs.first[j];
                    for a in 0..runs.range(j).len() {
                        let i = first + a;
                        c_rows[rows.ptr[i] + (j - rows.first[i])] = c_e[runs.ptr[j] + a];
                    }
                }
                (a_k, a_e, c_rows)
            }
        }
    }

    /// `∂_σ b̄^1_(i)` and `∂_σ b̄^2_(j)`, indexed `[interval][parameter]`.
    fn coefficient_derivatives(&self, sigma: &[f64], cov: &StructuredCov) -> (Vec<Vec<Vec2>>, Vec<Vec<Vec2>>) {
        let row = |t: f64, x: Vec2, k: usize| -> Vec<Vec2> {
            self.model.diffusion_dsigma(t, x, sigma).expect("checked by caller").iter().map(|m| m[k]).collect()
        };
        if self.model.is_constant() {
            let y0 = self.model.y0();
            (vec![row(0.0, y0, 0); cov.l1()], vec![row(0.0, y0, 1); cov.l2()])
        } else {
            (
                self.points.side1.iter().map(|&(t, x)| row(t, x, 0)).collect(),
                self.points.side2.iter().map(|&(t, x)| row(t, x, 1)).collect(),
            )
        }
    }

    /// Symmetric finite-difference Hessian with steps `1e-4 max(1, |σ_j|)`.
    /// Near the boundary the stencil is shifted inward and `one_sided` is set.
    pub fn hess_h(&self, sigma: &[f64]) -> Result<Hessian> {
        let bx = self.model.param_box();
        let d = sigma.len();
        let mut h = vec![0.0; d];
        let mut center = sigma.to_vec();
        let mut one_sided = false;
        for j in 0..d {
            h[j] = HESS_STEP * sigma[j].abs().max(1.0);
            if 2.0 * h[j] > bx.upper[j] - bx.lower[j] {
                return Err(Error::InvalidArgument(format!("parameter box too narrow in coordinate {j}")));
            }
            if sigma[j] + h[j] > bx.upper[j] {
                center[j] = bx.upper[j] - h[j];
                one_sided = true;
            } else if sigma[j] - h[j] < bx.lower[j] {
                center[j] = bx.lower[j] + h[j];
                one_sided = true;
            }
        }
        let eval = |steps: &[(usize, f64)]| -> Result<f64> {
            let mut s = center.clone();
            for &(j, k) in steps {
                s[j] += k * h[j];
            }
            // keep stencil points on the closed box despite rounding
            bx.clamp(&mut s);
            self.quasi_loglik(&s)
        };
        let f0 = eval(&[])?;
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = (eval(&[(i, 1.0)])? - 2.0 * f0 + eval(&[(i, -1.0)])?) / (h[i] * h[i]);
            for j in 0..i {
                let v = (eval(&[(i, 1.0), (j, 1.0)])? - eval(&[(i, 1.0), (j, -1.0)])?
                    - eval(&[(i, -1.0), (j, 1.0)])?
                    + eval(&[(i, -1.0), (j, -1.0)])?)
                    / (4.0 * h[i] * h[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        if one_sided {
            log::warn!("Hessian stencil shifted inside the box at {sigma:?}");
        }
        Ok(Hessian { matrix: m, one_sided })
    }
}

/// First pivot at which an unpivoted Cholesky of `s` breaks down.
fn dense_failing_pivot(s: &DMatrix<f64>) -> usize {
    let n = s.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let mut d = s[(k, k)];
        for p in 0..k {
            d -= l[(k, p)] * l[(k, p)];
        }
        if !(d > 0.0) {
            return k;
        }
        let lkk = d.sqrt();
        l[(k, k)] = lkk;
        for r in k + 1..n {
            let mut v = s[(r, k)];
            for p in 0..k {
                v -= l[(r, p)] * l[(k, p)];
            }
            l[(r, k)] = v / lkk;
        }
    }
    n
}
