//! Variable-band (envelope) storage for symmetric positive definite matrices.
//!
//! Row `k` stores the lower-triangular entries in columns `first[k]..=k`.
//! Cholesky factorization never fills outside this envelope, so factor,
//! solve, log-determinant and the selected inverse all run in
//! `O(sum_k width_k^2)`, which is `O(n w^2)` for a plain band of half-width `w`.

#[derive(Debug, Clone)]
pub struct EnvelopeMatrix {
    first: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeMatrix {
    /// Zero matrix with the given per-row first column. Panics if `first[k] > k`.
    pub fn zeros(first: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(first.len() + 1);
        offsets.push(0);
        for (k, &f) in first.iter().enumerate() {
            assert!(f <= k, "envelope row {k} starts at column {f}");
            offsets.push(offsets[k] + (k - f + 1));
        }
        let nnz = *offsets.last().unwrap();
        Self { first, offsets, data: vec![0.0; nnz] }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn first_col(&self, row: usize) -> usize {
        self.first[row]
    }

    /// Largest `k - first[k]` over rows.
    pub fn bandwidth(&self) -> usize {
        self.first.iter().enumerate().map(|(k, &f)| k - f).max().unwrap_or(0)
    }

    pub fn stored_entries(&self) -> usize {
        self.data.len()
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(col <= row && col >= self.first[row]);
        self.offsets[row] + col - self.first[row]
    }

    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        let (r, c) = if row >= col { (row, col) } else { (col, row) };
        c >= self.first[r]
    }

    /// Symmetric read; zero outside the envelope.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (r, c) = if row >= col { (row, col) } else { (col, row) };
        if c < self.first[r] {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    /// Adds `v` to the lower entry `(row, col)`, `col <= row`.
    #[inline]
    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        let i = self.idx(row, col);
        self.data[i] += v;
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        let i = self.idx(row, col);
        self.data[i] = v;
    }

    /// `scale · A + diag · I` on the same envelope.
    pub fn affine(&self, scale: f64, diag: f64) -> EnvelopeMatrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= scale;
        }
        for k in 0..out.dim() {
            let i = out.idx(k, k);
            out.data[i] += diag;
        }
        out
    }

    #[inline]
    fn row(&self, k: usize) -> &[f64] {
        &self.data[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        nalgebra::DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// In-place Cholesky `A = L L^T`. On failure returns the failing pivot row.
    pub fn cholesky(mut self) -> Result<EnvelopeCholesky, usize> {
        let n = self.dim();
        for k in 0..n {
            let fk = self.first[k];
            let ok = self.offsets[k];
            let (done, rest) = self.data.split_at_mut(ok);
            let row_k = &mut rest[..k - fk + 1];
            for j in fk..k {
                let fj = self.first[j];
                let oj = self.offsets[j];
                let start = fk.max(fj);
                let row_j = &done[oj..oj + (j - fj + 1)];
                let a = &row_k[start - fk..j - fk];
                let b = &row_j[start - fj..j - fj];
                let dotp: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                row_k[j - fk] = (row_k[j - fk] - dotp) / row_j[j - fj];
            }
            let sq: f64 = row_k[..k - fk].iter().map(|l| l * l).sum();
            let d = row_k[k - fk] - sq;
            if !(d > 0.0) || !d.is_finite() {
                return Err(k);
            }
            row_k[k - fk] = d.sqrt();
        }
        Ok(EnvelopeCholesky { factor: self })
    }
}

/// Lower Cholesky factor stored on the envelope of the original matrix.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    factor: EnvelopeMatrix,
}

impl EnvelopeCholesky {
    pub fn dim(&self) -> usize {
        self.factor.dim()
    }

    #[inline]
    fn diag(&self, k: usize) -> f64 {
        let f = &self.factor;
        f.data[f.offsets[k + 1] - 1]
    }

    pub fn log_det(&self) -> f64 {
        // products of pivots with occasional rescaling: one `ln` per chunk
        let mut acc = 0.0;
        let mut prod = 1.0f64;
        for k in 0..self.dim() {
            prod *= self.diag(k);
            if !(1e-150..=1e150).contains(&prod) {
                acc += prod.ln();
                prod = 1.0;
            }
        }
        2.0 * (acc + prod.ln())
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let f = &self.factor;
        for k in 0..f.dim() {
            let row = f.row(k);
            let fk = f.first[k];
            let mut s = b[k];
            for (m, l) in (fk..k).zip(row) {
                s -= l * b[m];
            }
            b[k] = s / row[k - fk];
        }
    }

    /// Solves `L^T x = y` in place.
    pub fn backward(&self, y: &mut [f64]) {
        let f = &self.factor;
        for k in (0..f.dim()).rev() {
            let row = f.row(k);
            let fk = f.first[k];
            let xk = y[k] / row[k - fk];
            y[k] = xk;
            for (m, l) in (fk..k).zip(row) {
                y[m] -= l * xk;
            }
        }
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }

    /// `b^T A^{-1} b`.
    pub fn inv_quad(&self, b: &[f64]) -> f64 {
        let mut y = b.to_vec();
        self.forward(&mut y);
        y.iter().map(|v| v * v).sum()
    }

    /// Entries of `A^{-1}` on the envelope (Takahashi recursion).
    pub fn selected_inverse(&self) -> EnvelopeMatrix {
        let f = &self.factor;
        let n = f.dim();
        // below[i]: rows k > i whose envelope reaches column i
        let mut below: Vec<Vec<usize>> = vec![Vec::new(); n];
        for k in 0..n {
            for j in f.first[k]..k {
                below[j].push(k);
            }
        }
        let mut inv = EnvelopeMatrix::zeros(f.first.clone());
        let mut lcol = Vec::new();
        let mut acc = Vec::new();
        for i in (0..n).rev() {
            let lii = self.diag(i);
            let rows = &below[i];
            lcol.clear();
            lcol.extend(rows.iter().map(|&k| f.data[f.idx(k, i)]));
            acc.clear();
            for &j in rows {
                let mut s = 0.0;
                for (&k, &lki) in rows.iter().zip(&lcol) {
                    s += inv.get(j, k) * lki;
                }
                acc.push(-s / lii);
            }
            let mut d = 1.0 / (lii * lii);
            for ((&j, &sji), &lji) in rows.iter().zip(&acc).zip(&lcol) {
                inv.set(j, i, sji);
                d -= lji * sji / lii;
            }
            inv.set(i, i, d);
        }
        inv
    }

    /// Diagonal of `A^{-1}`.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let inv = self.selected_inverse();
        (0..self.dim()).map(|k| inv.get(k, k)).collect()
    }
}
