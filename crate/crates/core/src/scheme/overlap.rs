use crate::banded::EnvelopeMatrix;
use crate::error::{Error, Result};
use crate::scheme::grid::{ObservationGrid, Side};

/// Contiguous runs of one orientation of `G`: for index `e` on the owning side,
/// partner indices `first[e] .. first[e] + len(e)` carry `vals[ptr[e]..ptr[e+1]]`.
#[derive(Debug, Clone)]
pub struct Runs {
    pub first: Vec<usize>,
    pub ptr: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Runs {
    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    #[inline]
    pub fn run(&self, e: usize) -> (usize, &[f64]) {
        (self.first[e], &self.vals[self.ptr[e]..self.ptr[e + 1]])
    }

    #[inline]
    pub fn range(&self, e: usize) -> std::ops::Range<usize> {
        self.ptr[e]..self.ptr[e + 1]
    }

    /// Largest `last - first` over runs.
    pub fn span(&self) -> usize {
        (0..self.len()).map(|e| self.ptr[e + 1] - self.ptr[e] - 1).max().unwrap_or(0)
    }
}

/// `G_ij = |I^i ∩ J^j| / sqrt(|I^i| |J^j|)`, stored by rows and by columns.
#[derive(Debug, Clone)]
pub struct OverlapMatrix {
    rows: Runs,
    cols: Runs,
    s_left: Vec<f64>,
    t_left: Vec<f64>,
}

impl OverlapMatrix {
    pub fn new(grid: &ObservationGrid) -> Self {
        let s = grid.s_times();
        let t = grid.t_times();
        let (l1, l2) = (grid.l1(), grid.l2());

        let mut rows = Runs { first: Vec::with_capacity(l1), ptr: vec![0], vals: Vec::new() };
        let mut j0 = 0;
        for i in 0..l1 {
            let (a, b) = (s[i], s[i + 1]);
            while t[j0 + 1] <= a {
                j0 += 1;
            }
            rows.first.push(j0);
            let mut j = j0;
            while j < l2 && t[j] < b {
                let ov = b.min(t[j + 1]) - a.max(t[j]);
                rows.vals.push(ov / ((b - a) * (t[j + 1] - t[j])).sqrt());
                j += 1;
            }
            rows.ptr.push(rows.vals.len());
        }

        let mut cols = Runs { first: vec![0; l2], ptr: vec![0; l2 + 1], vals: Vec::with_capacity(rows.vals.len()) };
        let mut counts = vec![0usize; l2];
        let mut firsts = vec![usize::MAX; l2];
        for i in 0..l1 {
            let (j0, r) = rows.run(i);
            for jj in 0..r.len() {
                counts[j0 + jj] += 1;
                firsts[j0 + jj] = firsts[j0 + jj].min(i);
            }
        }
        for j in 0..l2 {
            cols.ptr[j + 1] = cols.ptr[j] + counts[j];
            cols.first[j] = firsts[j];
        }
        cols.vals.resize(rows.vals.len(), 0.0);
        for i in 0..l1 {
            let (j0, r) = rows.run(i);
            for (jj, &v) in r.iter().enumerate() {
                let j = j0 + jj;
                cols.vals[cols.ptr[j] + i - cols.first[j]] = v;
            }
        }

        Self { rows, cols, s_left: s[..l1].to_vec(), t_left: t[..l2].to_vec() }
    }

    pub fn l1(&self) -> usize {
        self.rows.len()
    }

    pub fn l2(&self) -> usize {
        self.cols.len()
    }

    pub fn intervals(&self, side: Side) -> usize {
        self.runs(side).len()
    }

    /// Row runs (`Side::First`) or column runs (`Side::Second`).
    pub fn runs(&self, side: Side) -> &Runs {
        match side {
            Side::First => &self.rows,
            Side::Second => &self.cols,
        }
    }

    /// Left endpoints of the intervals of `side`.
    pub fn left_ends(&self, side: Side) -> &[f64] {
        match side {
            Side::First => &self.s_left,
            Side::Second => &self.t_left,
        }
    }

    pub fn nnz(&self) -> usize {
        self.rows.vals.len()
    }

    /// Max over rows of (last overlapping column - first overlapping column).
    pub fn bandwidth(&self) -> usize {
        self.rows.span()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (f, r) = self.rows.run(i);
        if j < f || j >= f + r.len() {
            0.0
        } else {
            r[j - f]
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.l1(), self.l2(), |i, j| self.get(i, j))
    }

    /// `G x` (`Side::First`, x of length l2) or `G^T x` (`Side::Second`, x of length l1):
    /// the result lives on `side`.
    pub fn apply_to(&self, side: Side, x: &[f64]) -> Vec<f64> {
        let runs = self.runs(side);
        (0..runs.len())
            .map(|e| {
                let (f, r) = runs.run(e);
                r.iter().zip(&x[f..f + r.len()]).map(|(g, v)| g * v).sum()
            })
            .collect()
    }

    /// `D_keep - V D_elim^{-1} V^T`, where `V` has the sparsity of `G` oriented with
    /// rows on `keep` and `coupling` aligned with `self.runs(keep.other()).vals`.
    pub fn schur_complement(
        &self,
        keep: Side,
        keep_diag: &[f64],
        elim_diag: &[f64],
        coupling: &[f64],
    ) -> EnvelopeMatrix {
        let elim = self.runs(keep.other());
        let keep_runs = self.runs(keep);
        let first: Vec<usize> = (0..keep_runs.len())
            .map(|k| {
                let e0 = keep_runs.first[k];
                elim.first[e0]
            })
            .collect();
        let mut m = EnvelopeMatrix::zeros(first);
        for (k, &d) in keep_diag.iter().enumerate() {
            m.set(k, k, d);
        }
        for e in 0..elim.len() {
            let k0 = elim.first[e];
            let v = &coupling[elim.range(e)];
            let inv = 1.0 / elim_diag[e];
            for a in 0..v.len() {
                let va = v[a] * inv;
                for b in 0..=a {
                    m.add(k0 + a, k0 + b, -va * v[b]);
                }
            }
        }
        m
    }

    /// Diagonal of `(I - z^2 G G^T)^{-1}` (side 1) or `(I - z^2 G^T G)^{-1}` (side 2).
    pub fn resolvent_diagonal(&self, z: f64, side: Side) -> Result<Vec<f64>> {
        if !(z.abs() < 1.0) {
            return Err(Error::Domain(z));
        }
        let n = self.intervals(side);
        if z == 0.0 {
            return Ok(vec![1.0; n]);
        }
        let other = self.runs(side.other());
        let coupling: Vec<f64> = other.vals.iter().map(|g| z * g).collect();
        let ones_k = vec![1.0; n];
        let ones_e = vec![1.0; other.len()];
        let m = self.schur_complement(side, &ones_k, &ones_e, &coupling);
        let chol = m
            .cholesky()
            .map_err(|p| Error::Numerical(format!("resolvent factorization failed at pivot {p} (|z| = {z})")))?;
        Ok(chol.inverse_diagonal())
    }

    /// `tr(E^side(t) (I - z^2 G G^T)^{-1})` (or the `G^T G` analog): the resolvent
    /// diagonal summed over intervals meeting `[0, t)`.
    pub fn resolvent_trace(&self, z: f64, t: f64, side: Side) -> Result<f64> {
        let diag = self.resolvent_diagonal(z, side)?;
        let left = self.left_ends(side);
        let active = left.partition_point(|&s| s < t);
        Ok(diag[..active].iter().sum())
    }

    /// Diagonal of `(G G^T)^p` (side 1) or `(G^T G)^p` (side 2).
    pub fn diag_power_traces(&self, p: usize, side: Side) -> Vec<f64> {
        let n = self.intervals(side);
        let q = p / 2;
        (0..n)
            .map(|i| {
                // v = (G G^T)^q e_i as a contiguous slice starting at `lo`
                let mut lo = i;
                let mut v = vec![1.0];
                for _ in 0..q {
                    let (l2, w) = self.apply_range(side.other(), lo, &v);
                    let (l1, u) = self.apply_range(side, l2, &w);
                    lo = l1;
                    v = u;
                }
                if p % 2 == 0 {
                    v.iter().map(|x| x * x).sum()
                } else {
                    let (_, w) = self.apply_range(side.other(), lo, &v);
                    w.iter().map(|x| x * x).sum()
                }
            })
            .collect()
    }

    /// Applies the orientation mapping a vector supported on `side.other()` indices
    /// `lo..lo+x.len()` to `side`, returning the (contiguous) support and values.
    fn apply_range(&self, side: Side, lo: usize, x: &[f64]) -> (usize, Vec<f64>) {
        // vector lives on side.other(); result on side. Use runs of side.other() to find support.
        let src = self.runs(side.other());
        let hi = lo + x.len() - 1;
        let out_lo = src.first[lo];
        let (f_hi, r_hi) = src.run(hi);
        let out_hi = f_hi + r_hi.len() - 1;
        let mut out = vec![0.0; out_hi - out_lo + 1];
        for (off, &xv) in x.iter().enumerate() {
            let (f, r) = src.run(lo + off);
            for (jj, &g) in r.iter().enumerate() {
                out[f + jj - out_lo] += g * xv;
            }
        }
        (out_lo, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::grid::{gen_poisson_grid, gen_uniform_grid};
    use nalgebra::DMatrix;

    fn example_grid() -> ObservationGrid {
        ObservationGrid::new(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 1.5, 2.0], None).unwrap()
    }

    /// Direct interval arithmetic, independent of the sweep.
    fn brute_g(grid: &ObservationGrid) -> DMatrix<f64> {
        let s = grid.s_times();
        let t = grid.t_times();
        DMatrix::from_fn(grid.l1(), grid.l2(), |i, j| {
            let ov = (s[i + 1].min(t[j + 1]) - s[i].max(t[j])).max(0.0);
            ov / ((s[i + 1] - s[i]) * (t[j + 1] - t[j])).sqrt()
        })
    }

    #[test]
    fn identical_grids_give_identity() {
        let g = OverlapMatrix::new(&gen_uniform_grid(5, 5, 0.0, 1.0).unwrap());
        let d = g.to_dense();
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d[(i, j)] - expect).abs() < 1e-15);
            }
        }
        assert_eq!(g.bandwidth(), 0);
    }

    #[test]
    fn small_example_rows() {
        let g = OverlapMatrix::new(&example_grid());
        let h = 0.5f64.sqrt();
        let d = g.to_dense();
        let expect = [[h, 0.5, 0.0], [0.0, 0.5, h]];
        for i in 0..2 {
            for j in 0..3 {
                assert!((d[(i, j)] - expect[i][j]).abs() < 1e-15);
            }
        }
        assert_eq!(g.bandwidth(), 1);
    }

    #[test]
    fn single_interval_each() {
        let g = OverlapMatrix::new(&ObservationGrid::new(vec![0.0, 3.0], vec![0.0, 3.0], None).unwrap());
        assert_eq!(g.to_dense(), DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn matches_brute_force_and_column_storage() {
        for seed in 0..10 {
            let grid = gen_poisson_grid(1.0, 1.7, 1.0, 60.0, seed).unwrap();
            let g = OverlapMatrix::new(&grid);
            let brute = brute_g(&grid);
            assert!((g.to_dense() - &brute).abs().max() < 1e-14);
            for j in 0..g.l2() {
                let (f, c) = g.runs(Side::Second).run(j);
                for (k, v) in c.iter().enumerate() {
                    assert_eq!(*v, g.get(f + k, j));
                }
            }
            // G > 0 iff overlap, values in (0, 1]
            for v in g.runs(Side::First).vals.iter() {
                assert!(*v > 0.0 && *v <= 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn diag_power_traces_examples() {
        let g = OverlapMatrix::new(&example_grid());
        assert_eq!(g.diag_power_traces(0, Side::First), vec![1.0, 1.0]);
        let d1 = g.diag_power_traces(1, Side::First);
        assert!((d1[0] - 0.75).abs() < 1e-15 && (d1[1] - 0.75).abs() < 1e-15);

        let id = OverlapMatrix::new(&gen_uniform_grid(4, 4, 0.0, 1.0).unwrap());
        for p in 0..5 {
            assert!(id.diag_power_traces(p, Side::Second).iter().all(|v| (v - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn diag_power_traces_match_dense_powers() {
        let grid = gen_poisson_grid(1.0, 0.6, 1.0, 25.0, 9).unwrap();
        let g = OverlapMatrix::new(&grid);
        let d = g.to_dense();
        let ggt = &d * d.transpose();
        let gtg = d.transpose() * &d;
        for p in 0..6 {
            let a = g.diag_power_traces(p, Side::First);
            let b = g.diag_power_traces(p, Side::Second);
            let pa = ggt.pow(p as u32);
            let pb = gtg.pow(p as u32);
            for i in 0..a.len() {
                assert!((a[i] - pa[(i, i)]).abs() < 1e-12);
            }
            for j in 0..b.len() {
                assert!((b[j] - pb[(j, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn resolvent_examples() {
        let id = OverlapMatrix::new(&gen_uniform_grid(7, 7, 0.0, 1.0).unwrap());
        let z: f64 = 0.6;
        let tr = id.resolvent_trace(z, 1.0, Side::First).unwrap();
        assert!((tr - 7.0 / (1.0 - z * z)).abs() < 1e-12);

        let g = OverlapMatrix::new(&example_grid());
        assert_eq!(g.resolvent_trace(0.0, 2.0, Side::First).unwrap(), 2.0);
        assert_eq!(g.resolvent_trace(0.0, 2.0, Side::Second).unwrap(), 3.0);
        assert!(matches!(g.resolvent_trace(1.0, 2.0, Side::First), Err(Error::Domain(_))));
        assert!(matches!(g.resolvent_trace(-1.5, 2.0, Side::Second), Err(Error::Domain(_))));
    }

    #[test]
    fn resolvent_spectral_identity_against_dense_eigenvalues() {
        for seed in 0..5 {
            let grid = gen_poisson_grid(1.0, 1.3, 1.0, 40.0, seed).unwrap();
            let g = OverlapMatrix::new(&grid);
            let d = g.to_dense();
            let eig = (&d * d.transpose()).symmetric_eigenvalues();
            for z in [0.1, 0.5, 0.9] {
                let z2: f64 = z * z;
                // eigenvalue oracle: sum over nonzero spectrum of z^2 λ / (1 - z^2 λ)
                let excess: f64 = eig.iter().map(|&l| z2 * l / (1.0 - z2 * l)).sum();
                let a = g.resolvent_trace(z, 1.0, Side::First).unwrap() - g.l1() as f64;
                let c = g.resolvent_trace(z, 1.0, Side::Second).unwrap() - g.l2() as f64;
                assert!((a - excess).abs() < 1e-10, "{a} vs {excess}");
                assert!((a - c).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn partial_resolvent_trace_counts_active_intervals() {
        let grid = gen_uniform_grid(4, 4, 0.0, 1.0).unwrap();
        let g = OverlapMatrix::new(&grid);
        assert_eq!(g.resolvent_trace(0.0, 0.25, Side::First).unwrap(), 1.0);
        assert_eq!(g.resolvent_trace(0.0, 0.26, Side::First).unwrap(), 2.0);
    }
}
