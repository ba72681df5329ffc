//! Six-node quadratic triangle with isoparametric geometry.
//!
//! Reference coordinates `ξ = (s, t)` with barycentrics `L0 = 1 - s - t`,
//! `L1 = s`, `L2 = t`. Node order follows [`crate::mesh::Triangle`].

use crate::real::{Real, Vec2};

/// Symmetric 2x2 tensor stored as `[xx, xy, yy]`.
pub type Sym2<T> = [T; 3];

const DL: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
const MID: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

fn barycentric<T: Real>(xi: Vec2<T>) -> [T; 3] {
    [T::one() - xi[0] - xi[1], xi[0], xi[1]]
}

pub fn shape<T: Real>(xi: Vec2<T>) -> [T; 6] {
    let l = barycentric(xi);
    let two = T::c(2.0);
    let four = T::c(4.0);
    [
        l[0] * (two * l[0] - T::one()),
        l[1] * (two * l[1] - T::one()),
        l[2] * (two * l[2] - T::one()),
        four * l[0] * l[1],
        four * l[1] * l[2],
        four * l[2] * l[0],
    ]
}

/// Reference gradients `∂N/∂(s, t)`.
pub fn shape_grad<T: Real>(xi: Vec2<T>) -> [Vec2<T>; 6] {
    let l = barycentric(xi);
    let dl = DL.map(|d| [T::c(d[0]), T::c(d[1])]);
    let four = T::c(4.0);
    let mut g = [[T::zero(); 2]; 6];
    for i in 0..3 {
        let f = four * l[i] - T::one();
        g[i] = [f * dl[i][0], f * dl[i][1]];
    }
    for (k, (a, b)) in MID.into_iter().enumerate() {
        for d in 0..2 {
            g[3 + k][d] = four * (l[a] * dl[b][d] + l[b] * dl[a][d]);
        }
    }
    g
}

/// Reference Hessians (constant on the element).
pub fn shape_hess<T: Real>() -> [Sym2<T>; 6] {
    let outer =
        |a: [f64; 2], b: [f64; 2]| -> [f64; 3] { [a[0] * b[0], 0.5 * (a[0] * b[1] + a[1] * b[0]), a[1] * b[1]] };
    let mut h = [[T::zero(); 3]; 6];
    for i in 0..3 {
        let o = outer(DL[i], DL[i]);
        h[i] = o.map(|v| T::c(4.0 * v));
    }
    for (k, (a, b)) in MID.into_iter().enumerate() {
        let o = outer(DL[a], DL[b]);
        h[3 + k] = o.map(|v| T::c(8.0 * v));
    }
    h
}

/// Image point and Jacobian determinant of the quadratic map at `xi`.
pub fn map_point<T: Real>(geo: &[Vec2<T>; 6], xi: Vec2<T>) -> (Vec2<T>, T) {
    let n = shape(xi);
    let g = shape_grad(xi);
    let mut x = [T::zero(); 2];
    let mut j = [[T::zero(); 2]; 2];
    for i in 0..6 {
        for r in 0..2 {
            x[r] += n[i] * geo[i][r];
            for c in 0..2 {
                j[r][c] += geo[i][r] * g[i][c];
            }
        }
    }
    (x, j[0][0] * j[1][1] - j[0][1] * j[1][0])
}

/// Values, physical gradients and the Jacobian determinant at one point.
#[derive(Debug, Clone, Copy)]
pub struct Eval<T> {
    pub x: Vec2<T>,
    pub det: T,
    pub values: [T; 6],
    pub grads: [Vec2<T>; 6],
    /// Inverse Jacobian `∂ξ/∂x` (rows: s, t).
    pub jinv: [[T; 2]; 2],
}

#[derive(Debug, Clone, Copy)]
pub struct ReferenceElement<T> {
    pub geo: [Vec2<T>; 6],
    pub curved: bool,
    affine_jinv: [[T; 2]; 2],
    affine_det: T,
}

fn jacobian<T: Real>(geo: &[Vec2<T>; 6], g: &[Vec2<T>; 6]) -> [[T; 2]; 2] {
    let mut j = [[T::zero(); 2]; 2];
    for i in 0..6 {
        for r in 0..2 {
            for c in 0..2 {
                j[r][c] += geo[i][r] * g[i][c];
            }
        }
    }
    j
}

fn invert<T: Real>(j: [[T; 2]; 2]) -> ([[T; 2]; 2], T) {
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    ([[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]], det)
}

impl<T: Real> ReferenceElement<T> {
    pub fn new(geo: [Vec2<T>; 6], curved: bool) -> Self {
        let (p0, p1, p2) = (geo[0], geo[1], geo[2]);
        let j = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let (affine_jinv, affine_det) = invert(j);
        Self {
            geo,
            curved,
            affine_jinv,
            affine_det,
        }
    }

    pub fn eval(&self, xi: Vec2<T>) -> Eval<T> {
        let values = shape(xi);
        let g = shape_grad(xi);
        let mut x = [T::zero(); 2];
        for i in 0..6 {
            x[0] += values[i] * self.geo[i][0];
            x[1] += values[i] * self.geo[i][1];
        }
        let (jinv, det) = if self.curved {
            invert(jacobian(&self.geo, &g))
        } else {
            (self.affine_jinv, self.affine_det)
        };
        let mut grads = [[T::zero(); 2]; 6];
        for i in 0..6 {
            // ∇x N = J^{-T} ∇ξ N
            grads[i] = [
                jinv[0][0] * g[i][0] + jinv[1][0] * g[i][1],
                jinv[0][1] * g[i][0] + jinv[1][1] * g[i][1],
            ];
        }
        Eval {
            x,
            det,
            values,
            grads,
            jinv,
        }
    }

    /// Physical Hessians of the six shape functions at `xi`, given the
    /// result of [`Self::eval`] at the same point.
    pub fn hessians(&self, ev: &Eval<T>) -> [Sym2<T>; 6] {
        let href = shape_hess::<T>();
        // second derivatives of the geometry map, one tensor per coordinate
        let mut hx = [[T::zero(); 3]; 2];
        if self.curved {
            for i in 0..6 {
                for k in 0..2 {
                    for c in 0..3 {
                        hx[k][c] += self.geo[i][k] * href[i][c];
                    }
                }
            }
        }
        let ji = ev.jinv;
        let mut out = [[T::zero(); 3]; 6];
        for i in 0..6 {
            let mut a = href[i];
            if self.curved {
                for k in 0..2 {
                    for c in 0..3 {
                        a[c] -= ev.grads[i][k] * hx[k][c];
                    }
                }
            }
            // J^{-T} A J^{-1}
            let am = [[a[0], a[1]], [a[1], a[2]]];
            let mut h = [[T::zero(); 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    let mut v = T::zero();
                    for p in 0..2 {
                        for q in 0..2 {
                            v += ji[p][r] * am[p][q] * ji[q][c];
                        }
                    }
                    h[r][c] = v;
                }
            }
            out[i] = [h[0][0], h[0][1], h[1][1]];
        }
        out
    }

    /// Reference coordinates of local node `i`.
    pub fn node_xi(i: usize) -> Vec2<T> {
        const XI: [[f64; 2]; 6] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]];
        [T::c(XI[i][0]), T::c(XI[i][1])]
    }
}
