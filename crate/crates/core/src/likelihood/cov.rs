use crate::error::{Error, Result};
use crate::scheme::{OverlapMatrix, Side};
use crate::sde::{dot, DiffusionModel, NonsyncSample, Vec2};

/// Previous-tick evaluation points: for each interval of a side, its left end
/// time and the state `(Y^1, Y^2)` built from the most recent observation of
/// each component at or before that time.
#[derive(Debug, Clone)]
pub struct CoefficientPoints {
    pub side1: Vec<(f64, Vec2)>,
    pub side2: Vec<(f64, Vec2)>,
    /// `j' = max{j : T^j <= S^{i-1}}` for each S-interval.
    pub prev_tick1: Vec<usize>,
    /// `i' = max{i : S^i <= T^{j-1}}` for each T-interval.
    pub prev_tick2: Vec<usize>,
}

impl CoefficientPoints {
    pub fn new(sample: &NonsyncSample) -> Self {
        let grid = sample.grid();
        let (y1, y2) = (sample.y1_obs(), sample.y2_obs());
        let s = grid.s_times();
        let t = grid.t_times();
        let mut side1 = Vec::with_capacity(grid.l1());
        let mut prev_tick1 = Vec::with_capacity(grid.l1());
        for i in 0..grid.l1() {
            let j = grid.previous_tick(Side::Second, s[i]);
            prev_tick1.push(j);
            side1.push((s[i], [y1[i], y2[j]]));
        }
        let mut side2 = Vec::with_capacity(grid.l2());
        let mut prev_tick2 = Vec::with_capacity(grid.l2());
        for j in 0..grid.l2() {
            let i = grid.previous_tick(Side::First, t[j]);
            prev_tick2.push(i);
            side2.push((t[j], [y1[i], y2[j]]));
        }
        Self { side1, side2, prev_tick1, prev_tick2 }
    }
}

/// `S(σ) = [[diag |b̄^1_(i)|^2, {b̄^1_(i)·b̄^2_(j) G_ij}], [.., diag |b̄^2_(j)|^2]]`
/// kept in factored form.
#[derive(Debug, Clone)]
pub struct StructuredCov {
    /// `b̄^1_(i)`, row 1 of `b` at the previous-tick point of S-interval `i`.
    pub b1: Vec<Vec2>,
    /// `b̄^2_(j)`.
    pub b2: Vec<Vec2>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    /// Off-diagonal block on `G`'s row pattern (aligned with `G.runs(First).vals`).
    pub coupling: Vec<f64>,
    pub prev_tick1: Vec<usize>,
    pub prev_tick2: Vec<usize>,
}

impl StructuredCov {
    pub(crate) fn from_points(
        model: &DiffusionModel,
        sigma: &[f64],
        points: &CoefficientPoints,
        overlap: &OverlapMatrix,
    ) -> Result<Self> {
        model.param_box().check(sigma)?;
        let (b1, b2): (Vec<Vec2>, Vec<Vec2>) = if model.is_constant() {
            let b = model.diffusion(0.0, model.y0(), sigma);
            (vec![b[0]; points.side1.len()], vec![b[1]; points.side2.len()])
        } else {
            (
                points.side1.iter().map(|&(t, x)| model.diffusion(t, x, sigma)[0]).collect(),
                points.side2.iter().map(|&(t, x)| model.diffusion(t, x, sigma)[1]).collect(),
            )
        };
        if b1.iter().chain(&b2).flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite diffusion coefficient at sigma = {sigma:?}")));
        }
        let d1 = b1.iter().map(|b| dot(*b, *b)).collect();
        let d2 = b2.iter().map(|b| dot(*b, *b)).collect();
        let coupling = coupling_along(overlap, Side::First, &b1, &b2);
        Ok(Self {
            b1,
            b2,
            d1,
            d2,
            coupling,
            prev_tick1: points.prev_tick1.clone(),
            prev_tick2: points.prev_tick2.clone(),
        })
    }

    pub fn l1(&self) -> usize {
        self.d1.len()
    }

    pub fn l2(&self) -> usize {
        self.d2.len()
    }

    pub fn diag(&self, side: Side) -> &[f64] {
        match side {
            Side::First => &self.d1,
            Side::Second => &self.d2,
        }
    }

    /// Coupling values aligned with `G.runs(side).vals`.
    pub fn coupling_along(&self, overlap: &OverlapMatrix, side: Side) -> Vec<f64> {
        match side {
            Side::First => self.coupling.clone(),
            Side::Second => coupling_along(overlap, Side::Second, &self.b1, &self.b2),
        }
    }

    /// Full symmetric matrix (tests and the dense path).
    pub fn to_dense(&self, overlap: &OverlapMatrix) -> nalgebra::DMatrix<f64> {
        let (l1, l2) = (self.l1(), self.l2());
        let mut s = nalgebra::DMatrix::zeros(l1 + l2, l1 + l2);
        for (i, d) in self.d1.iter().enumerate() {
            s[(i, i)] = *d;
        }
        for (j, d) in self.d2.iter().enumerate() {
            s[(l1 + j, l1 + j)] = *d;
        }
        let rows = overlap.runs(Side::First);
        for i in 0..l1 {
            let f = rows.first[i];
            for (jj, v) in self.coupling[rows.range(i)].iter().enumerate() {
                s[(i, l1 + f + jj)] = *v;
                s[(l1 + f + jj, i)] = *v;
            }
        }
        s
    }
}

pub(crate) fn coupling_along(overlap: &OverlapMatrix, side: Side, b1: &[Vec2], b2: &[Vec2]) -> Vec<f64> {
    let runs = overlap.runs(side);
    let mut out = Vec::with_capacity(runs.vals.len());
    for e in 0..runs.len() {
        let (f, r) = runs.run(e);
        for (kk, g) in r.iter().enumerate() {
            let (i, j) = match side {
                Side::First => (e, f + kk),
                Side::Second => (f + kk, e),
            };
            out.push(dot(b1[i], b2[j]) * g);
        }
    }
    out
}

/// `S(σ)` for a sample, evaluating `b` at previous-tick points.
pub fn build_s(model: &DiffusionModel, sigma: &[f64], sample: &NonsyncSample) -> Result<StructuredCov> {
    let overlap = OverlapMatrix::new(sample.grid());
    StructuredCov::from_points(model, sigma, &CoefficientPoints::new(sample), &overlap)
}
