//! Geometric multigrid V-cycle over the refinement hierarchy of a mesh,
//! used as a conjugate gradient preconditioner.
//!
//! Coarse operators are re-discretized on the parent meshes. Prolongation
//! evaluates the coarse quadratic field at the reference coordinates of the
//! fine nodes inside their parent elements; restriction is its transpose.
//! Smoothing is one forward Gauss–Seidel sweep before and one backward sweep
//! after the coarse correction, so the cycle is symmetric.

use crate::element;
use crate::linalg::Cholesky;
use crate::mesh::TriMesh;
use crate::real::Real;
use crate::sparse::{Csr, Preconditioner};

/// Interior numbering of a mesh: `dof[node]` and its inverse.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub dof: Vec<Option<usize>>,
    pub interior: Vec<usize>,
}

impl DofMap {
    pub fn new<T: Real>(mesh: &TriMesh<T>) -> Self {
        let mut dof = vec![None; mesh.node_count()];
        let mut interior = Vec::new();
        for (i, slot) in dof.iter_mut().enumerate() {
            if !mesh.is_boundary(i) {
                *slot = Some(interior.len());
                interior.push(i);
            }
        }
        Self { dof, interior }
    }

    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }
}

struct Level<T> {
    a: Csr<T>,
    /// Prolongation from the next coarser level (absent on the coarsest).
    p: Option<Csr<T>>,
}

pub struct Multigrid<T> {
    /// Coarsest first; the last level is the system itself.
    levels: Vec<Level<T>>,
    coarse: Cholesky,
}

fn prolongation<T: Real>(fine: &TriMesh<T>, fine_map: &DofMap, coarse: &TriMesh<T>, coarse_map: &DofMap) -> Csr<T> {
    let locations = fine.parent_locations();
    let mut triplets = Vec::new();
    for (row, &node) in fine_map.interior.iter().enumerate() {
        if node < coarse.node_count() {
            if let Some(c) = coarse_map.dof[node] {
                triplets.push((row, c, T::one()));
            }
            continue;
        }
        let (e, xi) = locations[node].expect("fine node without parent location");
        let n = element::shape(xi);
        for (k, &cn) in coarse.triangles()[e].iter().enumerate() {
            if let Some(c) = coarse_map.dof[cn] {
                if n[k] != T::zero() {
                    triplets.push((row, c, n[k]));
                }
            }
        }
    }
    Csr::from_triplets_rect(fine_map.len(), coarse_map.len(), &triplets)
}

impl<T: Real> Multigrid<T> {
    /// Builds the hierarchy below `mesh`. `assemble` returns the interior
    /// stiffness matrix of a mesh; `fine` is that matrix for `mesh` itself.
    /// Returns `None` when the mesh has no parent.
    pub fn new(
        mesh: &TriMesh<T>,
        fine: Csr<T>,
        mut assemble: impl FnMut(&TriMesh<T>, &DofMap) -> Csr<T>,
    ) -> Option<Self> {
        mesh.parent()?;
        let mut chain: Vec<&TriMesh<T>> = vec![mesh];
        while let Some(p) = chain.last().unwrap().parent() {
            chain.push(p);
        }
        chain.reverse();
        let maps: Vec<DofMap> = chain.iter().map(|m| DofMap::new(m)).collect();
        let mut levels = Vec::with_capacity(chain.len());
        let mut fine = Some(fine);
        for (l, m) in chain.iter().enumerate() {
            let a = if l + 1 == chain.len() {
                fine.take().unwrap()
            } else {
                assemble(m, &maps[l])
            };
            let p = (l > 0).then(|| prolongation(m, &maps[l], chain[l - 1], &maps[l - 1]));
            levels.push(Level { a, p });
        }
        let a0 = &levels[0].a;
        let n0 = a0.dim();
        let mut dense = vec![T::zero(); n0 * n0];
        for i in 0..n0 {
            let (cols, vals) = a0.row(i);
            for (c, v) in cols.iter().zip(vals) {
                dense[i * n0 + *c] = *v;
            }
        }
        let coarse = Cholesky::new(&dense, n0, 0.0)?;
        Some(Self { levels, coarse })
    }

    /// The finest-level matrix (the system being solved).
    pub fn matrix(&self) -> &Csr<T> {
        &self.levels.last().unwrap().a
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    fn cycle(&self, l: usize, b: &[T], x: &mut [T]) {
        if l == 0 {
            x.copy_from_slice(b);
            self.coarse.solve(x);
            return;
        }
        let level = &self.levels[l];
        let a = &level.a;
        x.iter_mut().for_each(|v| *v = T::zero());
        a.gauss_seidel(b, x, true);
        let mut r = a.mul(x);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = *bi - *ri;
        }
        let p = level.p.as_ref().unwrap();
        let nc = self.levels[l - 1].a.dim();
        let mut bc = vec![T::zero(); nc];
        p.mul_transpose_add(&r, &mut bc);
        let mut xc = vec![T::zero(); nc];
        self.cycle(l - 1, &bc, &mut xc);
        let corr = p.mul(&xc);
        for (xi, ci) in x.iter_mut().zip(&corr) {
            *xi += *ci;
        }
        a.gauss_seidel(b, x, false);
    }
}

impl<T: Real> Preconditioner<T> for Multigrid<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        self.cycle(self.levels.len() - 1, r, z);
    }
}
