//! Minimal complex CSR matrix: enough for operator assembly, matvecs,
//! adjoints, and Matrix Market export. Square matrices only.

use nalgebra::DMatrix;
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn zeros(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    /// Build from (row, col, value) triplets; duplicates are summed, exact
    /// zeros dropped.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, Complex64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![Complex64::new(0.0, 0.0); triplets.len()];
        let mut cursor = counts.clone();
        for &(r, c, v) in triplets {
            let p = cursor[r];
            cols[p] = c;
            vals[p] = v;
            cursor[r] += 1;
        }
        // sort each row by column, merge duplicates, drop zeros
        let mut row_ptr = vec![0usize; n + 1];
        let mut out_cols = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        let mut scratch: Vec<(usize, Complex64)> = Vec::new();
        for r in 0..n {
            scratch.clear();
            for p in counts[r]..counts[r + 1] {
                scratch.push((cols[p], vals[p]));
            }
            scratch.sort_unstable_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < scratch.len() {
                let c = scratch[i].0;
                let mut v = scratch[i].1;
                i += 1;
                while i < scratch.len() && scratch[i].0 == c {
                    v += scratch[i].1;
                    i += 1;
                }
                if v != Complex64::new(0.0, 0.0) {
                    out_cols.push(c);
                    out_vals.push(v);
                }
            }
            row_ptr[r + 1] = out_cols.len();
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx: out_cols,
            vals: out_vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[Complex64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.vals[a..b])
    }

    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let mut acc = Complex64::new(0.0, 0.0);
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[p] * x[self.col_idx[p]];
            }
            y[r] = acc;
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn scale(&self, s: Complex64) -> CsrMatrix {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= s;
        }
        out
    }

    /// Scale row r by d[r] (left-multiplication by diag(d)).
    pub fn scale_rows(&self, d: &[Complex64]) -> CsrMatrix {
        let mut out = self.clone();
        for r in 0..self.n {
            for p in out.row_ptr[r]..out.row_ptr[r + 1] {
                out.vals[p] *= d[r];
            }
        }
        out
    }

    /// Scale column c by d[c] (right-multiplication by diag(d)).
    pub fn scale_cols(&self, d: &[Complex64]) -> CsrMatrix {
        let mut out = self.clone();
        for p in 0..out.vals.len() {
            out.vals[p] *= d[out.col_idx[p]];
        }
        out
    }

    pub fn add(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for m in [self, other] {
            for r in 0..m.n {
                for p in m.row_ptr[r]..m.row_ptr[r + 1] {
                    trip.push((r, m.col_idx[p], m.vals[p]));
                }
            }
        }
        CsrMatrix::from_triplets(self.n, &trip)
    }

    /// Conjugate transpose A^H.
    /// Row-wise sparse product self · other with a dense accumulator row.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n, other.n, "matmul dimension mismatch");
        let n = self.n;
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        let mut touched: Vec<usize> = Vec::new();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0usize);
        for r in 0..n {
            let (cols, vs) = self.row(r);
            for (&k, &v) in cols.iter().zip(vs) {
                let (kcols, kvs) = other.row(k);
                for (&c, &kv) in kcols.iter().zip(kvs) {
                    if acc[c] == Complex64::new(0.0, 0.0) {
                        touched.push(c);
                    }
                    acc[c] += v * kv;
                }
            }
            touched.sort_unstable();
            touched.dedup(); // a partial sum hitting exact zero re-registers its column
            for &c in &touched {
                let z = acc[c];
                acc[c] = Complex64::new(0.0, 0.0);
                if z != Complex64::new(0.0, 0.0) {
                    col_idx.push(c);
                    vals.push(z);
                }
            }
            touched.clear();
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n, row_ptr, col_idx, vals }
    }

    pub fn hermitian_transpose(&self) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                trip.push((self.col_idx[p], r, self.vals[p].conj()));
            }
        }
        CsrMatrix::from_triplets(self.n, &trip)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.vals.iter().all(|v| v.im.abs() <= tol)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[p])] = self.vals[p];
            }
        }
        m
    }

    pub fn from_dense(m: &DMatrix<Complex64>, drop_tol: f64) -> CsrMatrix {
        assert_eq!(m.nrows(), m.ncols());
        let n = m.nrows();
        let mut trip = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let v = m[(r, c)];
                if v.norm() > drop_tol {
                    trip.push((r, c, v));
                }
            }
        }
        CsrMatrix::from_triplets(n, &trip)
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.vals.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}
