//! Forward operator wrapper.
//!
//! The matrix is always kept dense. When it is mostly zeros (the blur
//! operators of the imaging examples) a CSR copy of `K` and of `Kᵀ` is built
//! once and used for matrix-vector products.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{convert::serial::convert_dense_csr, CsrMatrix};

/// Fill ratio below which products go through the sparse copy.
const SPARSE_DENSITY: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct Operator {
    dense: DMatrix<f64>,
    sparse: Option<(CsrMatrix<f64>, CsrMatrix<f64>)>,
}

impl Operator {
    pub fn new(dense: DMatrix<f64>) -> Self {
        let nnz = dense.iter().filter(|v| **v != 0.0).count();
        let total = dense.nrows() * dense.ncols();
        let sparse = if total > 0 && (nnz as f64) < SPARSE_DENSITY * total as f64 {
            let csr = convert_dense_csr(&dense);
            let csr_t = csr.transpose();
            Some((csr, csr_t))
        } else {
            None
        };
        Self { dense, sparse }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn nrows(&self) -> usize {
        self.dense.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.dense.ncols()
    }

    pub fn is_sparse(&self) -> bool {
        self.sparse.is_some()
    }

    /// `K u`
    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        match &self.sparse {
            Some((csr, _)) => csr_mul(csr, u),
            None => &self.dense * u,
        }
    }

    /// `Kᵀ r`
    pub fn apply_adjoint(&self, r: &DVector<f64>) -> DVector<f64> {
        match &self.sparse {
            Some((_, csr_t)) => csr_mul(csr_t, r),
            None => self.dense.tr_mul(r),
        }
    }

    /// `KᵀK`, dense.
    pub fn gram(&self) -> DMatrix<f64> {
        self.dense.tr_mul(&self.dense)
    }

    /// `KKᵀ`, dense.
    pub fn outer_gram(&self) -> DMatrix<f64> {
        &self.dense * self.dense.transpose()
    }

    /// Dense copy of the columns listed in `cols`.
    pub fn columns(&self, cols: &[usize]) -> DMatrix<f64> {
        self.dense.select_columns(cols)
    }

    /// Largest eigenvalue of `KᵀK` by power iteration, stopped at the given
    /// relative change of the Rayleigh quotient.
    pub fn spectral_norm_sq(&self, rel_tol: f64, max_iter: usize) -> f64 {
        let n = self.ncols();
        if n == 0 {
            return 0.0;
        }
        // Deterministic, non-degenerate start.
        let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64) * 0.7).sin());
        v /= v.norm();
        let mut lambda = 0.0;
        for _ in 0..max_iter {
            let w = self.apply_adjoint(&self.apply(&v));
            let next = v.dot(&w);
            let norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            v = w / norm;
            if (next - lambda).abs() <= rel_tol * next.abs() {
                return next.max(norm);
            }
            lambda = next;
        }
        lambda
    }
}

impl From<DMatrix<f64>> for Operator {
    fn from(m: DMatrix<f64>) -> Self {
        Operator::new(m)
    }
}

fn csr_mul(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.nrows());
    for (i, row) in a.row_iter().enumerate() {
        let mut acc = 0.0;
        for (j, v) in row.col_indices().iter().zip(row.values()) {
            acc += v * x[*j];
        }
        out[i] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_and_dense_products_agree() {
        let mut m = DMatrix::zeros(30, 40);
        for i in 0..30 {
            m[(i, i)] = 2.0 + i as f64;
            m[(i, i + 3)] = -1.0;
        }
        let op = Operator::new(m.clone());
        assert!(op.is_sparse());
        let u = DVector::from_fn(40, |i, _| (i as f64).cos());
        let r = DVector::from_fn(30, |i, _| (i as f64 * 0.3).sin());
        assert!((op.apply(&u) - &m * &u).amax() < 1e-13);
        assert!((op.apply_adjoint(&r) - m.tr_mul(&r)).amax() < 1e-13);
    }

    #[test]
    fn power_iteration_matches_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 0.5]));
        let op = Operator::new(m);
        let l = op.spectral_norm_sq(1e-12, 10_000);
        assert!((l - 9.0).abs() < 1e-8, "{l}");
    }
}
