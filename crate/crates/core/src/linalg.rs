//! Small dense symmetric positive definite solves, carried out in `f64`.

use nalgebra::{DMatrix, DVector};

use crate::real::Real;

#[derive(Debug, Clone)]
pub struct Cholesky {
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Cholesky {
    /// Factors the row-major `n x n` matrix `a`. Returns `None` unless every
    /// pivot of the factor exceeds `min_pivot` times the largest diagonal
    /// entry (relative conditioning guard).
    pub fn new<T: Real>(a: &[T], n: usize, min_pivot: f64) -> Option<Self> {
        assert_eq!(a.len(), n * n);
        let m = DMatrix::from_fn(n, n, |i, j| a[i * n + j].as_f64());
        let scale = m.diagonal().iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let factor = m.cholesky()?;
        let l = factor.l_dirty();
        if (0..n).any(|i| !(l[(i, i)] * l[(i, i)] > min_pivot * scale)) {
            return None;
        }
        Some(Self { factor })
    }

    /// Solves `A x = b` in place.
    pub fn solve<T: Real>(&self, b: &mut [T]) {
        let mut v = DVector::from_iterator(b.len(), b.iter().map(|x| x.as_f64()));
        self.factor.solve_mut(&mut v);
        for (bi, vi) in b.iter_mut().zip(v.iter()) {
            *bi = T::c(*vi);
        }
    }

    /// `bᵀ A⁻¹ b`.
    pub fn inverse_quadratic_form<T: Real>(&self, b: &[T]) -> f64 {
        let v = DVector::from_iterator(b.len(), b.iter().map(|x| x.as_f64()));
        let w = self.factor.solve(&v);
        v.dot(&w)
    }
}
