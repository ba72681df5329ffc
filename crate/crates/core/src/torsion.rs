//! Quadratic finite-element solution of `Δu = N` in Ω, `u = 0` on Γ, and the
//! fields derived from it: recovered boundary flux, torsional rigidity, the
//! minimum point `z`, the P-function and `h = q - u`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::element::{self, ReferenceElement, Sym2};
use crate::error::{Error, Result};
use crate::mesh::{TriMesh, EDGES};
use crate::multigrid::{DofMap, Multigrid};
use crate::quadrature::{LineRule, TriangleRule};
use crate::real::{dot, norm, sub, Real, Vec2};
use crate::sparse::{self, CgReport, Csr};

/// Space dimension of every discretized computation.
pub const DIM: usize = 2;

/// Gauss points per boundary edge for boundary integrals.
pub const EDGE_POINTS: usize = 5;

#[derive(Debug, Clone)]
pub struct SolveOptions<T> {
    /// Relative residual target of the conjugate gradient solve.
    pub tolerance: T,
    /// Nodal starting guess (length = node count); boundary entries ignored.
    pub initial_guess: Option<Vec<T>>,
    pub preconditioner: PreconditionerKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PreconditionerKind {
    /// V-cycle over the refinement hierarchy; Jacobi on level-0 meshes.
    #[default]
    Multigrid,
    Jacobi,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            tolerance: T::tol(1e-12),
            initial_guess: None,
            preconditioner: PreconditionerKind::default(),
        }
    }
}

/// Solution values at one quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct FieldPoint<T> {
    pub x: Vec2<T>,
    /// Quadrature weight including the Jacobian.
    pub weight: T,
    pub u: T,
    pub grad: Vec2<T>,
    pub hess: Sym2<T>,
}

/// Boundary quadrature point on the exact curve with interpolated flux.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPoint<T> {
    pub theta: T,
    pub x: Vec2<T>,
    pub normal: Vec2<T>,
    pub curvature: T,
    /// Arc-length weight.
    pub weight: T,
    /// Recovered outward flux `u_ν`.
    pub flux: T,
    pub element: usize,
    /// Reference coordinates of the point inside `element`.
    pub xi: Vec2<T>,
}

/// Recovered flux at one boundary node.
#[derive(Debug, Clone, Copy)]
pub struct FluxSample<T> {
    pub node: usize,
    pub theta: T,
    pub x: Vec2<T>,
    pub flux: T,
}

/// Exact values for the ball of radius `R` in dimension `N`, where
/// `u = (|x|² - R²)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialOracle {
    pub dim: usize,
    pub radius: f64,
    /// Volume of the unit ball.
    pub omega: f64,
    pub volume: f64,
    pub surface: f64,
    pub flux: f64,
    pub p_value: f64,
    pub tau: f64,
    pub curvature: f64,
    /// `∫|∇u|²`, equal to `τ`.
    pub energy: f64,
    /// Both sides of `(N + 2)∫|∇u|² = ∫ u_ν² (x·ν) dS`.
    pub pohozaev: f64,
    /// Both sides of `∫P = (1/2 + 1/N)∫|∇u|²`.
    pub p_integral: f64,
    /// Both sides of `∫_Γ u_ν = N|Ω|`.
    pub divergence: f64,
    /// `∫_Γ H (x·ν) dS = |Γ|`.
    pub minkowski: f64,
    /// `∫_Γ dS/H = N|Ω|`.
    pub heintze_karcher: f64,
}

/// Volume of the unit ball in `R^n`, by `ω_n = 2π/n · ω_{n-2}`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

pub fn radial_oracle(dim: usize, radius: f64) -> Result<RadialOracle> {
    if dim < 2 {
        return Err(Error::Config(format!("dimension {dim} is below 2")));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Config(format!("radius {radius} is not positive")));
    }
    let n = dim as f64;
    let omega = unit_ball_volume(dim);
    let volume = omega * radius.powi(dim as i32);
    let surface = n * omega * radius.powi(dim as i32 - 1);
    let tau = n * volume * radius * radius / (n + 2.0);
    Ok(RadialOracle {
        dim,
        radius,
        omega,
        volume,
        surface,
        flux: radius,
        p_value: radius * radius / 2.0,
        tau,
        curvature: 1.0 / radius,
        energy: tau,
        pohozaev: (n + 2.0) * tau,
        p_integral: (0.5 + 1.0 / n) * tau,
        divergence: n * volume,
        minkowski: surface,
        heintze_karcher: n * volume,
    })
}

#[derive(Debug, Clone)]
pub struct TorsionSolution<T> {
    mesh: Arc<TriMesh<T>>,
    u: Vec<T>,
    boundary_nodes: Vec<usize>,
    flux_nodal: Vec<T>,
    flux_series: TrigSeries<T>,
    flux: Vec<T>,
    boundary: Vec<BoundaryPoint<T>>,
    tau: T,
    energy: T,
    mesh_area: T,
    z: Vec2<T>,
    u_min: T,
    shift: T,
    grad_nodal: Vec<Vec2<T>>,
    p: Vec<T>,
    h: Vec<T>,
    cg: CgReport,
    area: T,
    perimeter: T,
    radius: T,
}

fn affine_rule<T: Real>() -> TriangleRule<T> {
    TriangleRule::of_degree(4)
}

fn curved_rule<T: Real>() -> TriangleRule<T> {
    TriangleRule::of_degree(8)
}

/// Element stiffness matrix and load vector `∫ N_i`.
fn element_system<T: Real>(el: &ReferenceElement<T>, rule: &TriangleRule<T>) -> ([[T; 6]; 6], [T; 6]) {
    let mut k = [[T::zero(); 6]; 6];
    let mut f = [T::zero(); 6];
    for (xi, w) in rule.points.iter().zip(&rule.weights) {
        let ev = el.eval(*xi);
        let wd = *w * ev.det;
        for i in 0..6 {
            f[i] += wd * ev.values[i];
            for j in i..6 {
                k[i][j] += wd * dot(ev.grads[i], ev.grads[j]);
            }
        }
    }
    for i in 0..6 {
        for j in 0..i {
            k[i][j] = k[j][i];
        }
    }
    (k, f)
}

pub fn solve_torsion<T: Real>(mesh: impl Into<Arc<TriMesh<T>>>) -> Result<TorsionSolution<T>> {
    solve_torsion_with(mesh, &SolveOptions::default())
}

pub fn solve_torsion_with<T: Real>(
    mesh: impl Into<Arc<TriMesh<T>>>,
    options: &SolveOptions<T>,
) -> Result<TorsionSolution<T>> {
    let mesh: Arc<TriMesh<T>> = mesh.into();
    let n_nodes = mesh.node_count();
    let nd = T::c(DIM as f64);

    let map = DofMap::new(&mesh);
    let (dof, interior) = (&map.dof, &map.interior);
    let n_dof = interior.len();
    let locals = element_systems(&mesh);
    let mut a = Csr::from_elements(n_dof, mesh.triangles(), dof);
    let mut rhs = vec![T::zero(); n_dof];
    for (tri, (k, f)) in mesh.triangles().iter().zip(&locals) {
        for i in 0..6 {
            let Some(r) = dof[tri[i]] else { continue };
            rhs[r] -= nd * f[i];
            for j in 0..6 {
                if let Some(c) = dof[tri[j]] {
                    a.add(r, c, k[i][j]);
                }
            }
        }
    }

    let mut x: Vec<T> = match &options.initial_guess {
        Some(g) if g.len() == n_nodes => interior.iter().map(|&i| g[i]).collect(),
        Some(g) => {
            return Err(Error::Config(format!(
                "initial guess has {} entries, mesh has {n_nodes} nodes",
                g.len()
            )))
        }
        None => vec![T::zero(); n_dof],
    };
    let max_iter = ((20.0 * (n_dof.max(1) as f64).sqrt()).ceil() as usize).max(50);
    let multigrid = match options.preconditioner {
        PreconditionerKind::Multigrid if mesh.parent().is_some() => {
            Multigrid::new(&mesh, a, |m, map| stiffness(m, map))
        }
        _ => {
            let cg = sparse::pcg(&a, &rhs, &mut x, options.tolerance, max_iter)?;
            return finish_solve(mesh, map, x, locals, cg);
        }
    };
    let mg = multigrid.ok_or_else(|| Error::Mesh("singular coarse-level operator".into()))?;
    let cg = sparse::pcg_with(mg.matrix(), &rhs, &mut x, options.tolerance, max_iter, &mg)?;
    drop(mg);
    finish_solve(mesh, map, x, locals, cg)
}

type Local<T> = ([[T; 6]; 6], [T; 6]);

fn element_systems<T: Real>(mesh: &TriMesh<T>) -> Vec<Local<T>> {
    let rule_a = affine_rule::<T>();
    let rule_c = curved_rule::<T>();
    (0..mesh.triangles().len())
        .into_par_iter()
        .map(|e| {
            let rule = if mesh.is_curved(e) { &rule_c } else { &rule_a };
            element_system(&mesh.reference(e), rule)
        })
        .collect()
}

/// Interior stiffness matrix of `mesh`.
fn stiffness<T: Real>(mesh: &TriMesh<T>, map: &DofMap) -> Csr<T> {
    let locals = element_systems(mesh);
    let mut a = Csr::from_elements(map.len(), mesh.triangles(), &map.dof);
    for (tri, (k, _)) in mesh.triangles().iter().zip(&locals) {
        for i in 0..6 {
            let Some(r) = map.dof[tri[i]] else { continue };
            for j in 0..6 {
                if let Some(c) = map.dof[tri[j]] {
                    a.add(r, c, k[i][j]);
                }
            }
        }
    }
    a
}

fn finish_solve<T: Real>(
    mesh: Arc<TriMesh<T>>,
    map: DofMap,
    x: Vec<T>,
    locals: Vec<Local<T>>,
    cg: CgReport,
) -> Result<TorsionSolution<T>> {
    let n_nodes = mesh.node_count();
    let nd = T::c(DIM as f64);
    let interior = &map.interior;
    let mut u = vec![T::zero(); n_nodes];
    for (k, &i) in interior.iter().enumerate() {
        u[i] = x[k];
    }

    // boundary nodes in counter-clockwise order: start corner and mid node of each edge
    let mut boundary_nodes = Vec::with_capacity(2 * mesh.boundary_edges().len());
    for e in mesh.boundary_edges() {
        boundary_nodes.push(e.nodes[0]);
        boundary_nodes.push(e.nodes[1]);
    }
    let mut slot = vec![usize::MAX; n_nodes];
    for (k, &i) in boundary_nodes.iter().enumerate() {
        slot[i] = k;
    }

    // variational flux recovery: M g = b with b_i = ∫ ∇u·∇φ_i + N φ_i
    let nb = boundary_nodes.len();
    let mut b = vec![T::zero(); nb];
    for (tri, (k, f)) in mesh.triangles().iter().zip(&locals) {
        for i in 0..6 {
            let s = slot[tri[i]];
            if s == usize::MAX {
                continue;
            }
            let mut v = nd * f[i];
            for j in 0..6 {
                v += k[i][j] * u[tri[j]];
            }
            b[s] += v;
        }
    }
    drop(locals);
    let line = LineRule::<T>::new(EDGE_POINTS);
    let mut triplets = Vec::with_capacity(9 * mesh.boundary_edges().len());
    for e in mesh.boundary_edges() {
        let p = e.nodes.map(|i| mesh.nodes()[i]);
        let idx = e.nodes.map(|i| slot[i]);
        for (s, w) in line.iter() {
            let (n1, d1) = edge_shape(s);
            let mut dx = [T::zero(); 2];
            for k in 0..3 {
                dx[0] += d1[k] * p[k][0];
                dx[1] += d1[k] * p[k][1];
            }
            let ds = w * norm(dx);
            for i in 0..3 {
                for j in 0..3 {
                    triplets.push((idx[i], idx[j], ds * n1[i] * n1[j]));
                }
            }
        }
    }
    let mass = Csr::from_triplets(nb, &triplets);
    // start from the lumped solve
    let mut lumped = vec![T::zero(); nb];
    for &(r, _, v) in &triplets {
        lumped[r] += v;
    }
    let mut flux_nodal: Vec<T> = b.iter().zip(&lumped).map(|(b, m)| *b / *m).collect();
    sparse::pcg(&mass, &b, &mut flux_nodal, T::tol(1e-14), 10 * nb + 100)?;
    let flux_series = project_flux(&mesh, &flux_nodal);
    let flux: Vec<T> = boundary_nodes
        .iter()
        .map(|&i| {
            let t = mesh.node_theta(i).unwrap();
            flux_series.eval(t) / mesh.domain().sample(t).speed
        })
        .collect();

    let mut sol = TorsionSolution {
        mesh: mesh.clone(),
        u,
        boundary_nodes,
        flux_nodal,
        flux_series,
        flux,
        boundary: Vec::new(),
        tau: T::zero(),
        energy: T::zero(),
        mesh_area: T::zero(),
        z: [T::zero(); 2],
        u_min: T::zero(),
        shift: T::zero(),
        grad_nodal: Vec::new(),
        p: Vec::new(),
        h: Vec::new(),
        cg,
        area: T::zero(),
        perimeter: T::zero(),
        radius: T::zero(),
    };
    let (area, perimeter) = mesh.domain().area_perimeter();
    sol.area = area;
    sol.perimeter = perimeter;
    sol.radius = nd * area / perimeter;
    sol.boundary = sol.build_boundary_points(&line);

    let [int_u, energy, mesh_area] = sol.integrate_many(|fp| [fp.u, dot(fp.grad, fp.grad), T::one()]);
    sol.tau = -nd * int_u;
    sol.energy = energy;
    sol.mesh_area = mesh_area;
    sol.locate_minimum();
    let z = sol.z;
    let [int_q] = sol.integrate_many(|fp| {
        let d = sub(fp.x, z);
        [T::c(0.5) * dot(d, d)]
    });
    sol.shift = (int_q - int_u) / mesh_area;
    sol.nodal_fields();
    Ok(sol)
}

/// `c0 + Σ_k (cos_k cos kθ + sin_k sin kθ)`, k = 1..K.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigSeries<T> {
    pub c0: T,
    pub cos: Vec<T>,
    pub sin: Vec<T>,
}

impl<T: Real> TrigSeries<T> {
    pub fn eval(&self, theta: T) -> T {
        let (s1, c1) = theta.sin_cos();
        let (mut s, mut c) = (T::zero(), T::one());
        let mut v = self.c0;
        for (a, b) in self.cos.iter().zip(&self.sin) {
            (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
            v += *a * c + *b * s;
        }
        v
    }

    pub fn modes(&self) -> usize {
        self.cos.len()
    }
}

/// Highest mode kept when projecting the recovered flux.
pub const FLUX_MODE_CAP: usize = 256;

/// Projects the flux density `g |dx/dθ|` onto trigonometric polynomials in θ
/// of degree `min(edges/4, FLUX_MODE_CAP)`. The nodal recovery carries an
/// edge-scale oscillation with zero mean on every edge; the projection
/// removes it while keeping the superconvergent moments.
fn project_flux<T: Real>(mesh: &TriMesh<T>, g: &[T]) -> TrigSeries<T> {
    let edges = mesh.boundary_edges();
    let modes = (edges.len() / 4).clamp(1, FLUX_MODE_CAP);
    let line = LineRule::<T>::new(8);
    let nb = g.len();
    let pi = T::PI();
    let mut c0 = T::zero();
    let mut cos = vec![T::zero(); modes];
    let mut sin = vec![T::zero(); modes];
    for (k, e) in edges.iter().enumerate() {
        let gv = [g[2 * k], g[2 * k + 1], g[(2 * k + 2) % nb]];
        for (s, w) in line.iter() {
            let theta = e.theta_at(s);
            let (n1, _) = edge_shape(s);
            let density = (n1[0] * gv[0] + n1[1] * gv[1] + n1[2] * gv[2]) * mesh.domain().sample(theta).speed;
            let wd = w * e.theta_span * density;
            c0 += wd;
            let (s1, c1) = theta.sin_cos();
            let (mut sn, mut cn) = (T::zero(), T::one());
            for m in 0..modes {
                (sn, cn) = (sn * c1 + cn * s1, cn * c1 - sn * s1);
                cos[m] += wd * cn;
                sin[m] += wd * sn;
            }
        }
    }
    TrigSeries {
        c0: c0 / (T::c(2.0) * pi),
        cos: cos.into_iter().map(|v| v / pi).collect(),
        sin: sin.into_iter().map(|v| v / pi).collect(),
    }
}

/// Quadratic shape functions on `[0, 1]` (start, mid, end) and their derivatives.
pub(crate) fn edge_shape<T: Real>(s: T) -> ([T; 3], [T; 3]) {
    let one = T::one();
    let two = T::c(2.0);
    let four = T::c(4.0);
    (
        [(one - s) * (one - two * s), four * s * (one - s), s * (two * s - one)],
        [four * s - T::c(3.0), four - T::c(8.0) * s, four * s - one],
    )
}

impl<T: Real> TorsionSolution<T> {
    fn build_boundary_points(&self, line: &LineRule<T>) -> Vec<BoundaryPoint<T>> {
        let mesh = &self.mesh;
        let domain = mesh.domain();
        let mut out = Vec::with_capacity(line.points.len() * mesh.boundary_edges().len());
        for e in mesh.boundary_edges() {
            let (a, b) = EDGES[e.local_edge];
            let (xa, xb) = (ReferenceElement::<T>::node_xi(a), ReferenceElement::<T>::node_xi(b));
            for (s, w) in line.iter() {
                let theta = e.theta_at(s);
                let smp = domain.sample(theta);
                out.push(BoundaryPoint {
                    theta,
                    x: smp.point,
                    normal: smp.normal,
                    curvature: smp.curvature,
                    weight: w * e.theta_span * smp.speed,
                    flux: self.flux_series.eval(theta) / smp.speed,
                    element: e.element,
                    xi: [(T::one() - s) * xa[0] + s * xb[0], (T::one() - s) * xa[1] + s * xb[1]],
                });
            }
        }
        out
    }

    /// Evaluates the solution inside element `e` at reference point `xi`.
    pub fn field_at(&self, e: usize, xi: Vec2<T>) -> FieldPoint<T> {
        let el = self.mesh.reference(e);
        self.field_with(&el, e, xi, T::one())
    }

    fn field_with(&self, el: &ReferenceElement<T>, e: usize, xi: Vec2<T>, w: T) -> FieldPoint<T> {
        let tri = &self.mesh.triangles()[e];
        let ev = el.eval(xi);
        let hs = el.hessians(&ev);
        let mut u = T::zero();
        let mut grad = [T::zero(); 2];
        let mut hess = [T::zero(); 3];
        for i in 0..6 {
            let ui = self.u[tri[i]];
            u += ui * ev.values[i];
            grad[0] += ui * ev.grads[i][0];
            grad[1] += ui * ev.grads[i][1];
            for c in 0..3 {
                hess[c] += ui * hs[i][c];
            }
        }
        FieldPoint {
            x: ev.x,
            weight: w * ev.det,
            u,
            grad,
            hess,
        }
    }

    /// Integrates `K` functionals of the solution over Ω at once. Element
    /// contributions are summed in element order.
    pub fn integrate_many<const K: usize>(&self, f: impl Fn(&FieldPoint<T>) -> [T; K] + Sync) -> [T; K] {
        self.integrate_nodal(&[], |fp, _| f(fp))
    }

    pub fn integrate(&self, f: impl Fn(&FieldPoint<T>) -> T + Sync) -> T {
        self.integrate_many(|fp| [f(fp)])[0]
    }

    /// Like [`Self::integrate_many`], also passing the quadratic interpolant
    /// of the nodal field `nodal` (zero when `nodal` is empty).
    pub fn integrate_nodal<const K: usize>(
        &self,
        nodal: &[T],
        f: impl Fn(&FieldPoint<T>, T) -> [T; K] + Sync,
    ) -> [T; K] {
        let parts: Vec<[T; K]> = self.element_parts(
            |acc: &mut [T; K], fp, v| {
                let r = f(fp, v);
                for k in 0..K {
                    acc[k] += fp.weight * r[k];
                }
            },
            nodal,
            [T::zero(); K],
        );
        parts.into_iter().fold([T::zero(); K], |mut acc, p| {
            for k in 0..K {
                acc[k] += p[k];
            }
            acc
        })
    }

    /// Integrates `width` functionals at once; `f` writes the integrands
    /// into its output slice.
    pub fn integrate_dyn(&self, width: usize, f: impl Fn(&FieldPoint<T>, &mut [T]) + Sync) -> Vec<T> {
        let parts = self.element_parts(
            |acc: &mut (Vec<T>, Vec<T>), fp, _| {
                f(fp, &mut acc.1);
                for (a, v) in acc.0.iter_mut().zip(&acc.1) {
                    *a += fp.weight * *v;
                }
            },
            &[],
            (vec![T::zero(); width], vec![T::zero(); width]),
        );
        parts.into_iter().fold(vec![T::zero(); width], |mut acc, p| {
            for (a, v) in acc.iter_mut().zip(&p.0) {
                *a += *v;
            }
            acc
        })
    }

    fn element_parts<A: Clone + Send + Sync>(
        &self,
        add: impl Fn(&mut A, &FieldPoint<T>, T) + Sync,
        nodal: &[T],
        zero: A,
    ) -> Vec<A> {
        let rule_a = affine_rule::<T>();
        let rule_c = curved_rule::<T>();
        (0..self.mesh.triangles().len())
            .into_par_iter()
            .map(|e| {
                let el = self.mesh.reference(e);
                let rule = if el.curved { &rule_c } else { &rule_a };
                let tri = &self.mesh.triangles()[e];
                let mut acc = zero.clone();
                for (xi, w) in rule.points.iter().zip(&rule.weights) {
                    let fp = self.field_with(&el, e, *xi, *w);
                    let v = if nodal.is_empty() {
                        T::zero()
                    } else {
                        let n = element::shape(*xi);
                        (0..6).fold(T::zero(), |s, i| s + n[i] * nodal[tri[i]])
                    };
                    add(&mut acc, &fp, v);
                }
                acc
            })
            .collect()
    }

    fn locate_minimum(&mut self) {
        let (imin, umin) = self.u.iter().enumerate().fold(
            (0, T::infinity()),
            |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
        );
        self.z = self.mesh.nodes()[imin];
        self.u_min = umin;
        let href = element::shape_hess::<T>();
        let slack = T::tol(1e-12);
        for (e, tri) in self.mesh.triangles().iter().enumerate() {
            let Some(local) = tri.iter().position(|&n| n == imin) else {
                continue;
            };
            let xi0 = ReferenceElement::<T>::node_xi(local);
            let g = element::shape_grad(xi0);
            let mut gu = [T::zero(); 2];
            let mut hu = [T::zero(); 3];
            for i in 0..6 {
                let ui = self.u[tri[i]];
                gu[0] += ui * g[i][0];
                gu[1] += ui * g[i][1];
                for c in 0..3 {
                    hu[c] += ui * href[i][c];
                }
            }
            let det = hu[0] * hu[2] - hu[1] * hu[1];
            if !(det > T::zero()) {
                continue;
            }
            let step = [
                (hu[2] * gu[0] - hu[1] * gu[1]) / det,
                (hu[0] * gu[1] - hu[1] * gu[0]) / det,
            ];
            let xi = [xi0[0] - step[0], xi0[1] - step[1]];
            if xi[0] < -slack || xi[1] < -slack || xi[0] + xi[1] > T::one() + slack {
                continue;
            }
            let n = element::shape(xi);
            let val = (0..6).fold(T::zero(), |acc, i| acc + n[i] * self.u[tri[i]]);
            if val <= self.u_min {
                self.u_min = val;
                self.z = element::map_point(&self.mesh.element_nodes(e), xi).0;
            }
        }
    }

    fn nodal_fields(&mut self) {
        let n = self.mesh.node_count();
        // gradients from affine elements where a node has any, since curved
        // elements carry the geometric error
        let mut sum = vec![[[T::zero(); 2]; 2]; n];
        let mut count = vec![[0u32; 2]; n];
        for (e, tri) in self.mesh.triangles().iter().enumerate() {
            let el = self.mesh.reference(e);
            let kind = usize::from(el.curved);
            for (l, &node) in tri.iter().enumerate() {
                let ev = el.eval(ReferenceElement::<T>::node_xi(l));
                for i in 0..6 {
                    let ui = self.u[tri[i]];
                    sum[node][kind][0] += ui * ev.grads[i][0];
                    sum[node][kind][1] += ui * ev.grads[i][1];
                }
                count[node][kind] += 1;
            }
        }
        let sum: Vec<Vec2<T>> = sum
            .iter()
            .zip(&count)
            .map(|(s, c)| if c[0] > 0 { s[0] } else { s[1] })
            .collect();
        let count: Vec<u32> = count.iter().map(|c| if c[0] > 0 { c[0] } else { c[1] }).collect();
        let half = T::c(0.5);
        self.grad_nodal = sum
            .iter()
            .zip(&count)
            .map(|(s, &c)| {
                let c = T::c(f64::from(c));
                [s[0] / c, s[1] / c]
            })
            .collect();
        self.p = (0..n)
            .map(|i| half * dot(self.grad_nodal[i], self.grad_nodal[i]) - self.u[i])
            .collect();
        // on Γ, u = 0 and ∇u = u_ν ν
        for (&node, &g) in self.boundary_nodes.iter().zip(&self.flux) {
            self.grad_nodal[node] = {
                let nu = self.mesh.domain().sample(self.mesh.node_theta(node).unwrap()).normal;
                [g * nu[0], g * nu[1]]
            };
            self.p[node] = half * g * g;
        }
        self.h = (0..n)
            .map(|i| {
                let d = sub(self.mesh.nodes()[i], self.z);
                half * dot(d, d) - self.shift - self.u[i]
            })
            .collect();
    }

    pub fn mesh(&self) -> &TriMesh<T> {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> Arc<TriMesh<T>> {
        self.mesh.clone()
    }

    /// Nodal values of `u`.
    pub fn u(&self) -> &[T] {
        &self.u
    }

    /// Torsional rigidity `τ = -N ∫ u`.
    pub fn tau(&self) -> T {
        self.tau
    }

    /// Dirichlet energy `∫ |∇u|²`.
    pub fn energy(&self) -> T {
        self.energy
    }

    /// Area of the curved mesh.
    pub fn mesh_area(&self) -> T {
        self.mesh_area
    }

    /// Exact `|Ω|` of the domain.
    pub fn area(&self) -> T {
        self.area
    }

    pub fn perimeter(&self) -> T {
        self.perimeter
    }

    /// `R = N|Ω|/|Γ|`.
    pub fn radius(&self) -> T {
        self.radius
    }

    /// `H₀ = 1/R`.
    pub fn h0(&self) -> T {
        T::one() / self.radius
    }

    /// Minimum point of `u`.
    pub fn z(&self) -> Vec2<T> {
        self.z
    }

    pub fn u_min(&self) -> T {
        self.u_min
    }

    /// The constant `a` in `q = |x - z|²/2 - a`, chosen so `h = q - u` has zero mean.
    pub fn shift(&self) -> T {
        self.shift
    }

    pub fn q(&self, x: Vec2<T>) -> T {
        let d = sub(x, self.z);
        T::c(0.5) * dot(d, d) - self.shift
    }

    pub fn cg_report(&self) -> CgReport {
        self.cg
    }

    /// Recovered flux at the boundary nodes, counter-clockwise, from the
    /// trigonometric projection.
    pub fn boundary_flux(&self) -> Vec<FluxSample<T>> {
        self.boundary_nodes
            .iter()
            .zip(&self.flux)
            .map(|(&node, &flux)| FluxSample {
                node,
                theta: self.mesh.node_theta(node).unwrap(),
                x: self.mesh.nodes()[node],
                flux,
            })
            .collect()
    }

    /// Flux from the trace of the element gradient, `∇u_h · ν`, at the
    /// boundary nodes (same order as [`Self::boundary_flux`]).
    pub fn gradient_trace_flux(&self) -> Vec<T> {
        let domain = self.mesh.domain();
        let mut out = Vec::with_capacity(self.boundary_nodes.len());
        for e in self.mesh.boundary_edges() {
            let (a, _) = EDGES[e.local_edge];
            for (local, node) in [(a, e.nodes[0]), (3 + e.local_edge, e.nodes[1])] {
                let fp = self.field_at(e.element, ReferenceElement::<T>::node_xi(local));
                let nu = domain.sample(self.mesh.node_theta(node).unwrap()).normal;
                out.push(dot(fp.grad, nu));
            }
        }
        out
    }

    /// Recovered flux at boundary parameter `theta`.
    pub fn flux_at(&self, theta: T) -> T {
        self.flux_series.eval(theta) / self.mesh.domain().sample(theta).speed
    }

    /// Flux density `u_ν |dx/dθ|` as a trigonometric series in θ.
    pub fn flux_series(&self) -> &TrigSeries<T> {
        &self.flux_series
    }

    /// Raw solution of the boundary mass system `M g = b` at the boundary
    /// nodes (same order as [`Self::boundary_flux`]). Against any function
    /// of the finite element space it reproduces the discrete Gauss–Green
    /// residual exactly.
    pub fn nodal_recovered_flux(&self) -> &[T] {
        &self.flux_nodal
    }

    /// Integral over the discrete boundary of `g w` for the nodal recovered
    /// flux `g` and nodal boundary values `w` (same order as the flux).
    pub fn discrete_boundary_pairing(&self, w: &[T]) -> T {
        let line = LineRule::<T>::new(4);
        let nb = self.flux_nodal.len();
        let mut total = T::zero();
        for (k, e) in self.mesh.boundary_edges().iter().enumerate() {
            let p = e.nodes.map(|i| self.mesh.nodes()[i]);
            let idx = [2 * k, 2 * k + 1, (2 * k + 2) % nb];
            for (s, wq) in line.iter() {
                let (n1, d1) = edge_shape(s);
                let mut dx = [T::zero(); 2];
                let (mut g, mut v) = (T::zero(), T::zero());
                for j in 0..3 {
                    dx[0] += d1[j] * p[j][0];
                    dx[1] += d1[j] * p[j][1];
                    g += n1[j] * self.flux_nodal[idx[j]];
                    v += n1[j] * w[idx[j]];
                }
                total += wq * norm(dx) * g * v;
            }
        }
        total
    }

    /// Boundary quadrature points (exact geometry, interpolated flux).
    pub fn boundary_points(&self) -> &[BoundaryPoint<T>] {
        &self.boundary
    }

    /// Integral over Γ of `f` evaluated at the boundary quadrature points.
    pub fn boundary_integral(&self, f: impl Fn(&BoundaryPoint<T>) -> T) -> T {
        self.boundary.iter().fold(T::zero(), |acc, p| acc + p.weight * f(p))
    }

    /// `q_ν = (x - z)·ν`.
    pub fn q_normal(&self, p: &BoundaryPoint<T>) -> T {
        dot(sub(p.x, self.z), p.normal)
    }

    /// Hessian of `u_h` at a boundary point, from the adjacent element.
    pub fn boundary_hessian(&self, p: &BoundaryPoint<T>) -> Sym2<T> {
        self.field_at(p.element, p.xi).hess
    }

    /// Averaged nodal gradients.
    pub fn nodal_gradients(&self) -> &[Vec2<T>] {
        &self.grad_nodal
    }

    /// Nodal values of `P = |∇u|²/2 - u`.
    pub fn p_nodal(&self) -> &[T] {
        &self.p
    }

    /// Nodal values of `h = q - u`.
    pub fn h_nodal(&self) -> &[T] {
        &self.h
    }

    /// `‖u_ν - R‖₂` over Γ.
    pub fn flux_deviation_l2(&self) -> T {
        let r = self.radius;
        self.boundary_integral(|p| (p.flux - r) * (p.flux - r)).sqrt()
    }
}

/// P-function data: nodal values and the element-wise `ΔP` integrand
/// `|∇²u|² - (Δu)²/N` at element centroids.
#[derive(Debug, Clone)]
pub struct PFunction<T> {
    pub nodal: Vec<T>,
    pub integrand: Vec<T>,
}

/// `|A|² - (tr A)²/N` for a symmetric 2x2 tensor.
pub fn traceless_norm_sq<T: Real>(h: Sym2<T>) -> T {
    let tr = h[0] + h[2];
    h[0] * h[0] + T::c(2.0) * h[1] * h[1] + h[2] * h[2] - tr * tr / T::c(DIM as f64)
}

pub fn p_function<T: Real>(sol: &TorsionSolution<T>) -> PFunction<T> {
    let third = T::c(1.0 / 3.0);
    let integrand = (0..sol.mesh().triangles().len())
        .into_par_iter()
        .map(|e| traceless_norm_sq(sol.field_at(e, [third, third]).hess))
        .collect();
    PFunction {
        nodal: sol.p_nodal().to_vec(),
        integrand,
    }
}
