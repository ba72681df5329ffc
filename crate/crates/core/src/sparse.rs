//! Compressed sparse rows and Jacobi-preconditioned conjugate gradients.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::Real;

/// CSR matrix with sorted column indices in every row; square unless built
/// with [`Csr::from_triplets_rect`].
#[derive(Debug, Clone)]
pub struct Csr<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

const ROW_CHUNK: usize = 4096;

impl<T: Real> Csr<T> {
    /// Sparsity pattern from element connectivity restricted to the unknowns
    /// numbered by `dof` (`None` marks eliminated nodes). Values start at zero.
    pub fn from_elements<const K: usize>(n: usize, elements: &[[usize; K]], dof: &[Option<usize>]) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for el in elements {
            for &a in el {
                let Some(ra) = dof[a] else { continue };
                for &b in el {
                    if let Some(cb) = dof[b] {
                        rows[ra].push(cb);
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(&r);
            row_ptr.push(cols.len());
        }
        let nnz = cols.len();
        Self {
            n,
            row_ptr,
            cols,
            vals: vec![T::zero(); nnz],
        }
    }

    /// Builds a square matrix from `(row, col, value)` triplets; duplicates
    /// are summed in the order given.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Self {
        Self::from_triplets_rect(n, n, triplets)
    }

    /// As [`Self::from_triplets`] with `rows` rows and `cols` columns.
    pub fn from_triplets_rect(n: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::new();
        let mut vals: Vec<T> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = triplets[k];
            assert!(r < n && c < ncols, "triplet out of range");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Adds `v` at `(r, c)`, which must be in the pattern.
    pub fn add(&mut self, r: usize, c: usize, v: T) {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        let k = self.cols[lo..hi]
            .binary_search(&c)
            .unwrap_or_else(|_| panic!("({r}, {c}) outside the sparsity pattern"));
        self.vals[lo + k] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[lo..hi]
            .binary_search(&c)
            .map(|k| self.vals[lo + k])
            .unwrap_or_else(|_| T::zero())
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`. Rows are split across threads; each row is summed
    /// sequentially so the result does not depend on the thread count.
    pub fn mul_into(&self, x: &[T], y: &mut [T]) {
        y.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(chunk, ys)| {
            let base = chunk * ROW_CHUNK;
            for (k, yi) in ys.iter_mut().enumerate() {
                let i = base + k;
                let mut s = T::zero();
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    s += self.vals[p] * x[self.cols[p]];
                }
                *yi = s;
            }
        });
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    /// `y += Aᵀ x` for a rectangular matrix stored with `dim()` rows.
    pub fn mul_transpose_add(&self, x: &[T], y: &mut [T]) {
        for (i, xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += *v * *xi;
            }
        }
    }

    /// One Gauss–Seidel sweep for `A x = b`, forward or backward.
    pub fn gauss_seidel(&self, b: &[T], x: &mut [T], forward: bool) {
        let mut sweep = |i: usize| {
            let (cols, vals) = self.row(i);
            let mut s = b[i];
            let mut d = T::one();
            for (c, v) in cols.iter().zip(vals) {
                if *c == i {
                    d = *v;
                } else {
                    s -= *v * x[*c];
                }
            }
            x[i] = s / d;
        };
        if forward {
            (0..self.n).for_each(&mut sweep);
        } else {
            (0..self.n).rev().for_each(&mut sweep);
        }
    }

    pub fn mul(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.mul_into(x, &mut y);
        y
    }
}

/// Dot product with fixed-size blocks combined in order, so the rounding does
/// not depend on the thread pool.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    const BLOCK: usize = 8192;
    let partial: Vec<T> = a
        .par_chunks(BLOCK)
        .zip(b.par_chunks(BLOCK))
        .map(|(x, y)| {
            let mut s = T::zero();
            for (p, q) in x.iter().zip(y) {
                s += *p * *q;
            }
            s
        })
        .collect();
    partial.into_iter().fold(T::zero(), |acc, v| acc + v)
}

/// Symmetric positive definite approximation of `A⁻¹`.
pub trait Preconditioner<T>: Sync {
    fn apply(&self, r: &[T], z: &mut [T]);
}

/// Diagonal scaling.
#[derive(Debug, Clone)]
pub struct Jacobi<T> {
    inv_diag: Vec<T>,
}

impl<T: Real> Jacobi<T> {
    pub fn new(a: &Csr<T>) -> Self {
        Self {
            inv_diag: a
                .diagonal()
                .into_iter()
                .map(|d| if d > T::zero() { T::one() / d } else { T::one() })
                .collect(),
        }
    }
}

impl<T: Real> Preconditioner<T> for Jacobi<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        z.par_iter_mut()
            .zip(r.par_iter().zip(self.inv_diag.par_iter()))
            .for_each(|(zi, (ri, di))| *zi = *ri * *di);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// True relative residual `|b - A x| / |b|` at exit. It can sit above
    /// the tolerance when the tolerance is below the rounding floor of the
    /// system; the recursive residual always meets it.
    pub relative_residual: f64,
}

/// Jacobi-preconditioned [`pcg_with`].
pub fn pcg<T: Real>(a: &Csr<T>, b: &[T], x: &mut [T], tol: T, max_iter: usize) -> Result<CgReport> {
    pcg_with(a, b, x, tol, max_iter, &Jacobi::new(a))
}

/// Solves `A x = b` for symmetric positive definite `A`, starting from `x`.
/// Stops when the recursive relative residual drops below `tol`; fails if
/// that takes more than `max_iter` iterations.
pub fn pcg_with<T: Real>(
    a: &Csr<T>,
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iter: usize,
    m: &impl Preconditioner<T>,
) -> Result<CgReport> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let bnorm = dot(b, b).sqrt();
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(CgReport {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];
    let true_residual = |x: &[T], r: &mut [T]| {
        a.mul_into(x, r);
        r.par_iter_mut().zip(b.par_iter()).for_each(|(ri, bi)| *ri = *bi - *ri);
        dot(r, r).sqrt() / bnorm
    };
    let mut iterations = 0;
    let mut previous = T::infinity();
    // The recursive residual keeps falling after the true residual reaches
    // its rounding floor; restart from the true residual while that helps.
    loop {
        let rel = true_residual(x, &mut r);
        if rel <= tol || rel > T::c(0.5) * previous {
            return Ok(CgReport {
                iterations,
                relative_residual: rel.as_f64(),
            });
        }
        previous = rel;
        m.apply(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        let mut recursive = rel;
        while recursive > tol {
            if iterations >= max_iter {
                return Err(Error::CgDiverged {
                    iterations,
                    residual: recursive.as_f64(),
                });
            }
            a.mul_into(&p, &mut q);
            let alpha = rz / dot(&p, &q);
            x.par_iter_mut()
                .zip(p.par_iter())
                .for_each(|(xi, pi)| *xi += alpha * *pi);
            r.par_iter_mut()
                .zip(q.par_iter())
                .for_each(|(ri, qi)| *ri -= alpha * *qi);
            iterations += 1;
            recursive = dot(&r, &r).sqrt() / bnorm;
            if recursive <= tol {
                break;
            }
            m.apply(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.par_iter_mut()
                .zip(z.par_iter())
                .for_each(|(pi, zi)| *pi = *zi + beta * *pi);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplacian_1d(n: usize) -> Csr<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        Csr::from_triplets(n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = Csr::from_triplets(2, &[(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(1, 0), 2.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn cg_solves_tridiagonal() {
        let n = 200;
        let a = laplacian_1d(n);
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let b = a.mul(&exact);
        let mut x = vec![0.0; n];
        let rep = pcg(&a, &b, &mut x, 1e-12, 10 * n).unwrap();
        assert!(rep.relative_residual <= 1e-12);
        let err = x.iter().zip(&exact).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn cg_reports_divergence() {
        let a = laplacian_1d(100);
        let b = vec![1.0; 100];
        let mut x = vec![0.0; 100];
        assert!(matches!(pcg(&a, &b, &mut x, 1e-12, 3), Err(Error::CgDiverged { .. })));
    }

    #[test]
    fn element_pattern_skips_eliminated_nodes() {
        let elements = [[0usize, 1, 2], [1, 2, 3]];
        let dof = [None, Some(0), Some(1), None];
        let a = Csr::<f64>::from_elements(2, &elements, &dof);
        assert_eq!(a.nnz(), 4);
    }

    proptest! {
        #[test]
        fn dot_matches_sequential(v in proptest::collection::vec(-1e3f64..1e3, 0..20000)) {
            let w: Vec<f64> = v.iter().map(|x| x * 0.5 + 1.0).collect();
            let seq: f64 = v.chunks(8192)
                .zip(w.chunks(8192))
                .map(|(a, b)| a.iter().zip(b).fold(0.0, |s, (p, q)| s + p * q))
                .fold(0.0, |s, v| s + v);
            prop_assert_eq!(dot(&v, &w), seq);
        }
    }
}
