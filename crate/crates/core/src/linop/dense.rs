use nalgebra::{DMatrix, DVector};

use crate::C64;

/// Dense matrix together with its Moore-Penrose pseudo-inverse.
#[derive(Clone, Debug)]
pub(crate) struct DenseRepr {
    pub m: DMatrix<C64>,
    pub pinv: DMatrix<C64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

impl DenseRepr {
    pub fn new(m: DMatrix<C64>) -> Self {
        let (rows, cols) = m.shape();
        let svd = m.clone().svd(true, true);
        let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
        singular_values.sort_by(|a, b| b.total_cmp(a));
        let smax = singular_values.first().copied().unwrap_or(0.0);
        let tol = rows.max(cols) as f64 * f64::EPSILON * smax;
        let rank = singular_values.iter().filter(|&&s| s > tol).count();
        // Singular values at or below `tol` are treated as exact zeros.
        let pinv = svd
            .pseudo_inverse(tol.max(f64::MIN_POSITIVE))
            .expect("svd computed with both factors");
        Self { m, pinv, singular_values, rank }
    }

    pub fn nonzero_singular_values(&self) -> &[f64] {
        &self.singular_values[..self.rank]
    }
}

pub(crate) fn mat_vec(m: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    let out = m * DVector::from_column_slice(v);
    out.as_slice().to_vec()
}

pub(crate) fn adj_mat_vec(m: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    let out = m.ad_mul(&DVector::from_column_slice(v));
    out.as_slice().to_vec()
}
