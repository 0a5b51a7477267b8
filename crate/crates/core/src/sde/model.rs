use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];
/// Row `k` is `b^k`, the loading of component `k` on the two Wiener processes.
pub type Mat2 = [[f64; 2]; 2];

type DriftFn = dyn Fn(f64, Vec2, &[f64]) -> Vec2 + Send + Sync;
type DiffusionFn = dyn Fn(f64, Vec2, &[f64]) -> Mat2 + Send + Sync;
type DiffusionDsigmaFn = dyn Fn(f64, Vec2, &[f64]) -> Vec<Mat2> + Send + Sync;

/// Axis-aligned parameter box `Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidArgument("box bounds must be nonempty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidArgument("box must have nonempty interior".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Membership in the closed box.
    pub fn contains(&self, sigma: &[f64]) -> bool {
        sigma.len() == self.dim()
            && sigma.iter().zip(self.lower.iter().zip(&self.upper)).all(|(s, (l, u))| *l <= *s && *s <= *u)
    }

    pub fn contains_interior(&self, sigma: &[f64]) -> bool {
        sigma.len() == self.dim()
            && sigma.iter().zip(self.lower.iter().zip(&self.upper)).all(|(s, (l, u))| *l < *s && *s < *u)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn clamp(&self, sigma: &mut [f64]) {
        for (j, s) in sigma.iter_mut().enumerate() {
            *s = s.clamp(self.lower[j], self.upper[j]);
        }
    }

    /// Center point plus the midpoint of each face, `2d + 1` points.
    pub fn start_points(&self) -> Vec<Vec<f64>> {
        let c = self.center();
        let mut pts = vec![c.clone()];
        for j in 0..self.dim() {
            for bound in [self.lower[j], self.upper[j]] {
                let mut p = c.clone();
                p[j] = bound;
                pts.push(p);
            }
        }
        pts
    }

    pub fn check(&self, sigma: &[f64]) -> Result<()> {
        if self.contains(sigma) {
            Ok(())
        } else {
            Err(Error::OutsideBox { sigma: sigma.to_vec() })
        }
    }
}

/// `dY_t = μ(t, Y_t, σ) dt + b(t, Y_t, σ) dW_t` in two dimensions.
#[derive(Clone)]
pub struct DiffusionModel {
    name: String,
    drift: Arc<DriftFn>,
    diffusion: Arc<DiffusionFn>,
    diffusion_dsigma: Option<Arc<DiffusionDsigmaFn>>,
    param_box: ParamBox,
    y0: Vec2,
    constant: bool,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("param_box", &self.param_box)
            .field("y0", &self.y0)
            .field("constant", &self.constant)
            .field("analytic_dsigma", &self.diffusion_dsigma.is_some())
            .finish()
    }
}

impl DiffusionModel {
    /// Zero-drift model with `Y_0 = 0`.
    pub fn new(
        name: impl Into<String>,
        param_box: ParamBox,
        diffusion: impl Fn(f64, Vec2, &[f64]) -> Mat2 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            drift: Arc::new(|_, _, _| [0.0, 0.0]),
            diffusion: Arc::new(diffusion),
            diffusion_dsigma: None,
            param_box,
            y0: [0.0, 0.0],
            constant: false,
        }
    }

    pub fn with_drift(mut self, drift: impl Fn(f64, Vec2, &[f64]) -> Vec2 + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(drift);
        self
    }

    /// Analytic `∂_σ b`: one 2x2 matrix per parameter.
    pub fn with_dsigma(
        mut self,
        dsigma: impl Fn(f64, Vec2, &[f64]) -> Vec<Mat2> + Send + Sync + 'static,
    ) -> Self {
        self.diffusion_dsigma = Some(Arc::new(dsigma));
        self
    }

    pub fn with_y0(mut self, y0: Vec2) -> Self {
        self.y0 = y0;
        self
    }

    /// Declares that `b` depends on `σ` only (not on `t` or `x`).
    pub fn constant_coefficients(mut self) -> Self {
        self.constant = true;
        self
    }

    /// Replaces `b` by `c b` (and `∂_σ b` by `c ∂_σ b`).
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        let b = self.diffusion.clone();
        out.diffusion = Arc::new(move |t, x, s| {
            let m = b(t, x, s);
            [[c * m[0][0], c * m[0][1]], [c * m[1][0], c * m[1][1]]]
        });
        if let Some(db) = self.diffusion_dsigma.clone() {
            out.diffusion_dsigma = Some(Arc::new(move |t, x, s| {
                db(t, x, s)
                    .into_iter()
                    .map(|m| [[c * m[0][0], c * m[0][1]], [c * m[1][0], c * m[1][1]]])
                    .collect()
            }));
        }
        out.name = format!("{}*{c}", self.name);
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.param_box.dim()
    }

    pub fn param_box(&self) -> &ParamBox {
        &self.param_box
    }

    pub fn y0(&self) -> Vec2 {
        self.y0
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn has_analytic_dsigma(&self) -> bool {
        self.diffusion_dsigma.is_some()
    }

    #[inline]
    pub fn drift(&self, t: f64, x: Vec2, sigma: &[f64]) -> Vec2 {
        (self.drift)(t, x, sigma)
    }

    #[inline]
    pub fn diffusion(&self, t: f64, x: Vec2, sigma: &[f64]) -> Mat2 {
        (self.diffusion)(t, x, sigma)
    }

    pub fn diffusion_dsigma(&self, t: f64, x: Vec2, sigma: &[f64]) -> Option<Vec<Mat2>> {
        self.diffusion_dsigma.as_ref().map(|f| f(t, x, sigma))
    }

    /// `(|b^1|, |b^2|, ρ)` with `ρ = b^1·b^2 / (|b^1||b^2|)`.
    pub fn norms_and_correlation(&self, t: f64, x: Vec2, sigma: &[f64]) -> (f64, f64, f64) {
        let b = self.diffusion(t, x, sigma);
        let n1 = dot(b[0], b[0]).sqrt();
        let n2 = dot(b[1], b[1]).sqrt();
        (n1, n2, dot(b[0], b[1]) / (n1 * n2))
    }

    /// `b^1 · b^2`.
    pub fn covariation_rate(&self, t: f64, x: Vec2, sigma: &[f64]) -> f64 {
        let b = self.diffusion(t, x, sigma);
        dot(b[0], b[1])
    }

    /// Built-in models by name: `bm`, `corr`, `free`, `state`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "bm" => Ok(bm_model()),
            "corr" => Ok(corr_model()),
            "free" => Ok(free_model()),
            "state" => Ok(state_model()),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }

    /// Conventional true parameter used by the CLI and experiments for built-ins.
    pub fn builtin_truth(name: &str) -> Result<Vec<f64>> {
        match name {
            "bm" => Ok(vec![1.0]),
            "corr" => Ok(vec![1.0, 0.8, 0.6]),
            "free" => Ok(vec![0.5]),
            "state" => Ok(vec![1.0, 0.7]),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["bm", "corr", "free", "state"]
    }
}

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `dY^k = σ dW^k`, independent components.
fn bm_model() -> DiffusionModel {
    DiffusionModel::new("bm", ParamBox::new(vec![0.2], vec![5.0]).unwrap(), |_, _, s| {
        [[s[0], 0.0], [0.0, s[0]]]
    })
    .with_dsigma(|_, _, _| vec![[[1.0, 0.0], [0.0, 1.0]]])
    .constant_coefficients()
}

/// Constant volatilities `σ1, σ2` and correlation `ρ`.
fn corr_model() -> DiffusionModel {
    DiffusionModel::new(
        "corr",
        ParamBox::new(vec![0.2, 0.2, -0.9], vec![3.0, 3.0, 0.9]).unwrap(),
        |_, _, s| {
            let (s1, s2, r) = (s[0], s[1], s[2]);
            [[s1, 0.0], [s2 * r, s2 * (1.0 - r * r).sqrt()]]
        },
    )
    .with_dsigma(|_, _, s| {
        let (s2, r) = (s[1], s[2]);
        let q = (1.0 - r * r).sqrt();
        vec![
            [[1.0, 0.0], [0.0, 0.0]],
            [[0.0, 0.0], [r, q]],
            [[0.0, 0.0], [s2, -s2 * r / q]],
        ]
    })
    .constant_coefficients()
}

/// `b = I` for every parameter value.
fn free_model() -> DiffusionModel {
    DiffusionModel::new("free", ParamBox::new(vec![0.0], vec![1.0]).unwrap(), |_, _, _| {
        [[1.0, 0.0], [0.0, 1.0]]
    })
    .with_dsigma(|_, _, _| vec![[[0.0, 0.0], [0.0, 0.0]]])
    .constant_coefficients()
}

const STATE_RHO: f64 = 0.3;
const STATE_KAPPA: f64 = 1.0;

fn state_level(x: f64) -> f64 {
    1.0 + 0.5 / (1.0 + x * x)
}

/// Mean-reverting drift; the first volatility depends on the level of `Y^2`.
fn state_model() -> DiffusionModel {
    let q = (1.0 - STATE_RHO * STATE_RHO).sqrt();
    DiffusionModel::new(
        "state",
        ParamBox::new(vec![0.2, 0.2], vec![3.0, 3.0]).unwrap(),
        move |_, x, s| [[s[0] * state_level(x[1]), 0.0], [s[1] * STATE_RHO, s[1] * q]],
    )
    .with_dsigma(move |_, x, _| {
        vec![[[state_level(x[1]), 0.0], [0.0, 0.0]], [[0.0, 0.0], [STATE_RHO, q]]]
    })
    .with_drift(|_, x, _| [-STATE_KAPPA * x[0], -STATE_KAPPA * x[1]])
    .with_y0([0.5, -0.5])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn builtins_are_elliptic_and_dsigma_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for name in DiffusionModel::builtin_names() {
            let m = DiffusionModel::builtin(name).unwrap();
            let pb = m.param_box().clone();
            for _ in 0..50 {
                let sigma: Vec<f64> = (0..m.dim())
                    .map(|j| pb.lower[j] + (0.05 + 0.9 * rng.gen::<f64>()) * pb.width(j))
                    .collect();
                let t = rng.gen::<f64>();
                let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
                let b = m.diffusion(t, x, &sigma);
                let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
                if *name != "free" {
                    assert!(det.abs() > 1e-8, "{name}: singular b");
                }
                let analytic = m.diffusion_dsigma(t, x, &sigma).unwrap();
                for j in 0..m.dim() {
                    let h = 1e-6 * sigma[j].abs().max(1.0);
                    let mut sp = sigma.clone();
                    let mut sm = sigma.clone();
                    sp[j] += h;
                    sm[j] -= h;
                    let bp = m.diffusion(t, x, &sp);
                    let bm = m.diffusion(t, x, &sm);
                    for r in 0..2 {
                        for c in 0..2 {
                            let fd = (bp[r][c] - bm[r][c]) / (2.0 * h);
                            let scale = analytic[j][r][c].abs().max(1.0);
                            assert!((fd - analytic[j][r][c]).abs() < 1e-6 * scale, "{name} d{j} b[{r}][{c}]");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn corr_model_rates() {
        let m = DiffusionModel::builtin("corr").unwrap();
        let s = [1.5, 0.5, -0.4];
        let (n1, n2, rho) = m.norms_and_correlation(0.0, [0.0, 0.0], &s);
        assert!((n1 - 1.5).abs() < 1e-15);
        assert!((n2 - 0.5).abs() < 1e-15);
        assert!((rho + 0.4).abs() < 1e-15);
        assert!((m.covariation_rate(0.0, [0.0, 0.0], &s) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn box_helpers() {
        let b = ParamBox::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(b.center(), vec![1.0, 0.0]);
        assert_eq!(b.start_points().len(), 5);
        assert!(b.contains(&[2.0, -1.0]));
        assert!(!b.contains_interior(&[2.0, 0.0]));
        assert!(matches!(b.check(&[2.1, 0.0]), Err(Error::OutsideBox { .. })));
        assert!(ParamBox::new(vec![1.0], vec![1.0]).is_err());
        assert!(matches!(DiffusionModel::builtin("nope"), Err(Error::UnknownModel(_))));
    }
}
