//! Conforming six-node triangulations of star-shaped domains.
//!
//! The level-0 mesh is a hexagonal ring template on the unit disc, mapped by
//! `(ρ, θ) ↦ c + ρ r(θ) (cos θ, sin θ)`. Each refinement splits every
//! triangle into four through its mid-edge nodes. Interior mid-edge nodes
//! sit at the midpoint of their edge, so interior elements are affine; mid
//! nodes of boundary edges are placed on the exact boundary through the
//! parameter θ, which curves the adjacent elements (quadratic isoparametric
//! geometry).

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::element::{self, ReferenceElement};
use crate::error::{Error, Result};
use crate::geometry::StarDomain;
use crate::quadrature::TriangleRule;
use crate::real::{norm, sub, Real, Vec2};

/// Highest refinement level accepted by [`TriMesh::build`].
pub const LEVEL_CAP: usize = 8;

/// Number of rings in the level-0 template; it has `6 n²` triangles.
pub const DEFAULT_BASE_RINGS: usize = 5;

/// Local node order of a six-node triangle: corners, then the mid nodes of
/// edges (0,1), (1,2), (2,0).
pub type Triangle = [usize; 6];

/// Local corner pairs of the three edges, matching mid-node slots 3, 4, 5.
pub const EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge<T> {
    /// Start corner, mid node, end corner, counter-clockwise along Γ.
    pub nodes: [usize; 3],
    /// Boundary parameter of the start corner and the (positive) increment
    /// to the end corner.
    pub theta_start: T,
    pub theta_span: T,
    /// Element owning the edge and the local edge index (0, 1 or 2).
    pub element: usize,
    pub local_edge: usize,
}

impl<T: Real> BoundaryEdge<T> {
    /// Boundary parameter at edge coordinate `s ∈ [0, 1]`.
    pub fn theta_at(&self, s: T) -> T {
        self.theta_start + s * self.theta_span
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh<T> {
    domain: StarDomain<T>,
    nodes: Vec<Vec2<T>>,
    node_theta: Vec<Option<T>>,
    vertex_count: usize,
    triangles: Vec<Triangle>,
    curved: Vec<bool>,
    boundary_edges: Vec<BoundaryEdge<T>>,
    level: usize,
    h: T,
    parent: Option<Arc<TriMesh<T>>>,
}

fn wrap_angle<T: Real>(t: T) -> T {
    let two_pi = T::c(2.0 * std::f64::consts::PI);
    let mut t = t % two_pi;
    if t < T::zero() {
        t += two_pi;
    }
    t
}

impl<T: Real> TriMesh<T> {
    pub fn build(domain: &StarDomain<T>, level: usize) -> Result<Self> {
        Self::build_with(domain, level, DEFAULT_BASE_RINGS)
    }

    pub fn build_with(domain: &StarDomain<T>, level: usize, base_rings: usize) -> Result<Self> {
        if level > LEVEL_CAP {
            return Err(Error::LevelCap { level, cap: LEVEL_CAP });
        }
        if base_rings == 0 {
            return Err(Error::Mesh("the template needs at least one ring".into()));
        }
        let mut mesh = Self::template(domain, base_rings)?;
        for _ in 0..level {
            mesh = Self::refine_from(Arc::new(mesh))?;
        }
        Ok(mesh)
    }

    fn template(domain: &StarDomain<T>, n: usize) -> Result<Self> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut vertices = vec![domain.center()];
        let mut theta = vec![None];
        let ring_start = |i: usize| if i == 0 { 0 } else { 1 + 3 * i * (i - 1) };
        for i in 1..=n {
            let rho = T::c(i as f64 / n as f64);
            for j in 0..6 * i {
                let t = T::c(two_pi * j as f64 / (6 * i) as f64);
                let (r, ..) = domain.radial(t);
                let (s, c) = t.sin_cos();
                let center = domain.center();
                vertices.push([center[0] + rho * r * c, center[1] + rho * r * s]);
                theta.push(if i == n { Some(t) } else { None });
            }
        }
        let index = |i: usize, k: usize, jl: usize| {
            if i == 0 {
                0
            } else {
                ring_start(i) + (k * i + jl) % (6 * i)
            }
        };
        let mut corners = Vec::with_capacity(6 * n * n);
        for i in 1..=n {
            for k in 0..6 {
                for jl in 0..i {
                    corners.push([index(i, k, jl), index(i, k, jl + 1), index(i - 1, k, jl)]);
                }
                for jl in 0..i - 1 {
                    corners.push([index(i - 1, k, jl), index(i, k, jl + 1), index(i - 1, k, jl + 1)]);
                }
            }
        }
        Self::with_mid_nodes(domain.clone(), vertices, theta, corners, 0)
    }

    /// Adds mid-edge nodes to a corner-only triangulation.
    fn with_mid_nodes(
        domain: StarDomain<T>,
        mut nodes: Vec<Vec2<T>>,
        mut node_theta: Vec<Option<T>>,
        corners: Vec<[usize; 3]>,
        level: usize,
    ) -> Result<Self> {
        let vertex_count = nodes.len();
        let key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
        let mut uses: HashMap<(usize, usize), u8> = HashMap::with_capacity(corners.len() * 2);
        for tri in &corners {
            for (a, b) in EDGES {
                *uses.entry(key(tri[a], tri[b])).or_insert(0) += 1;
            }
        }
        if let Some((edge, _)) = uses.iter().find(|(_, &c)| c > 2) {
            return Err(Error::Mesh(format!("edge {edge:?} shared by more than two triangles")));
        }
        let pi = T::PI();
        let mut mid_of: HashMap<(usize, usize), usize> = HashMap::with_capacity(uses.len());
        let mut triangles = Vec::with_capacity(corners.len());
        let mut boundary_edges = Vec::new();
        for (e, tri) in corners.iter().enumerate() {
            let mut t6 = [tri[0], tri[1], tri[2], 0, 0, 0];
            for (slot, (a, b)) in EDGES.into_iter().enumerate() {
                let (va, vb) = (tri[a], tri[b]);
                let k = key(va, vb);
                let on_boundary = uses[&k] == 1;
                let mid = *mid_of.entry(k).or_insert_with(|| {
                    let idx = nodes.len();
                    if on_boundary {
                        let (ta, tb) = match (node_theta[va], node_theta[vb]) {
                            (Some(ta), Some(tb)) => (ta, tb),
                            _ => unreachable!("boundary edge with an interior corner"),
                        };
                        let mut span = tb - ta;
                        if span > pi {
                            span -= T::c(2.0) * pi;
                        } else if span < -pi {
                            span += T::c(2.0) * pi;
                        }
                        let tm = wrap_angle(ta + T::c(0.5) * span);
                        nodes.push(domain.point(tm));
                        node_theta.push(Some(tm));
                    } else {
                        let (pa, pb) = (nodes[va], nodes[vb]);
                        nodes.push([T::c(0.5) * (pa[0] + pb[0]), T::c(0.5) * (pa[1] + pb[1])]);
                        node_theta.push(None);
                    }
                    idx
                });
                t6[3 + slot] = mid;
                if on_boundary {
                    let (ta, tb) = (node_theta[va].unwrap(), node_theta[vb].unwrap());
                    let mut span = tb - ta;
                    if span > pi {
                        span -= T::c(2.0) * pi;
                    } else if span < -pi {
                        span += T::c(2.0) * pi;
                    }
                    // counter-clockwise triangles traverse the boundary counter-clockwise
                    if span <= T::zero() {
                        return Err(Error::Mesh(format!(
                            "boundary edge ({va}, {vb}) of element {e} is not counter-clockwise"
                        )));
                    }
                    boundary_edges.push(BoundaryEdge {
                        nodes: [va, mid, vb],
                        theta_start: ta,
                        theta_span: span,
                        element: e,
                        local_edge: slot,
                    });
                }
            }
            triangles.push(t6);
        }
        boundary_edges.sort_by(|a, b| a.theta_start.partial_cmp(&b.theta_start).unwrap());
        let mut mesh = Self {
            domain,
            nodes,
            node_theta,
            vertex_count,
            triangles,
            curved: Vec::new(),
            boundary_edges,
            level,
            h: T::zero(),
            parent: None,
        };
        mesh.finish()?;
        Ok(mesh)
    }

    fn finish(&mut self) -> Result<()> {
        let mut h = T::zero();
        let mut curved = Vec::with_capacity(self.triangles.len());
        for (e, tri) in self.triangles.iter().enumerate() {
            let p = |i: usize| self.nodes[tri[i]];
            let twice_area = {
                let (a, b) = (sub(p(1), p(0)), sub(p(2), p(0)));
                a[0] * b[1] - a[1] * b[0]
            };
            if !(twice_area > T::zero()) {
                return Err(Error::Mesh(format!("element {e} has non-positive area")));
            }
            let mut bent = false;
            for (slot, (a, b)) in EDGES.into_iter().enumerate() {
                let len = norm(sub(p(b), p(a)));
                h = h.max(len);
                let mid = [T::c(0.5) * (p(a)[0] + p(b)[0]), T::c(0.5) * (p(a)[1] + p(b)[1])];
                if norm(sub(p(3 + slot), mid)) > T::tol(1e-13) * len {
                    bent = true;
                }
            }
            curved.push(bent);
        }
        self.h = h;
        self.curved = curved;
        // curved elements must keep a positive Jacobian everywhere
        let rule = TriangleRule::<T>::of_degree(4);
        for (e, _) in self.curved.iter().enumerate().filter(|(_, c)| **c) {
            let geo = self.element_nodes(e);
            for q in &rule.points {
                let (_, det) = element::map_point(&geo, *q);
                if !(det > T::zero()) {
                    return Err(Error::Mesh(format!("curved element {e} folds over (Jacobian {det:e})")));
                }
            }
        }
        Ok(())
    }

    /// Uniform 1-to-4 refinement; new boundary nodes are placed on Γ.
    /// Child `4e + c` of element `e` is, for `c = 0, 1, 2`, the corner
    /// triangle at local corner `c`, and for `c = 3` the middle triangle.
    pub fn refine(&self) -> Result<Self> {
        Self::refine_from(Arc::new(self.clone()))
    }

    fn refine_from(parent: Arc<Self>) -> Result<Self> {
        if parent.level + 1 > LEVEL_CAP {
            return Err(Error::LevelCap {
                level: parent.level + 1,
                cap: LEVEL_CAP,
            });
        }
        let mut corners = Vec::with_capacity(4 * parent.triangles.len());
        for t in &parent.triangles {
            let [v0, v1, v2, m01, m12, m20] = *t;
            corners.push([v0, m01, m20]);
            corners.push([m01, v1, m12]);
            corners.push([m20, m12, v2]);
            corners.push([m01, m12, m20]);
        }
        let mut mesh = Self::with_mid_nodes(
            parent.domain.clone(),
            parent.nodes.clone(),
            parent.node_theta.clone(),
            corners,
            parent.level + 1,
        )?;
        mesh.parent = Some(parent);
        Ok(mesh)
    }

    /// The mesh this one was refined from.
    pub fn parent(&self) -> Option<&Arc<TriMesh<T>>> {
        self.parent.as_ref()
    }

    /// For every node not present in the parent: the parent element that
    /// contains it and its reference coordinates there. Parent nodes keep
    /// their indices, so entries below the parent node count are `None`.
    pub fn parent_locations(&self) -> Vec<Option<(usize, Vec2<T>)>> {
        let Some(parent) = &self.parent else {
            return vec![None; self.nodes.len()];
        };
        let half = T::c(0.5);
        let zero = T::zero();
        let one = T::one();
        // child corners in parent reference coordinates
        let child = [
            [[zero, zero], [half, zero], [zero, half]],
            [[half, zero], [one, zero], [half, half]],
            [[zero, half], [half, half], [zero, one]],
            [[half, zero], [half, half], [zero, half]],
        ];
        let mut out = vec![None; self.nodes.len()];
        for (k, tri) in self.triangles.iter().enumerate() {
            let (e, c) = (k / 4, k % 4);
            for (slot, (a, b)) in EDGES.into_iter().enumerate() {
                let node = tri[3 + slot];
                if node >= parent.nodes.len() && out[node].is_none() {
                    let (pa, pb) = (child[c][a], child[c][b]);
                    out[node] = Some((e, [half * (pa[0] + pb[0]), half * (pa[1] + pb[1])]));
                }
            }
        }
        out
    }

    pub fn domain(&self) -> &StarDomain<T> {
        &self.domain
    }

    pub fn nodes(&self) -> &[Vec2<T>] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Corner nodes occupy indices `0..vertex_count()`.
    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn is_curved(&self, element: usize) -> bool {
        self.curved[element]
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge<T>] {
        &self.boundary_edges
    }

    /// Boundary parameter of a node on Γ.
    pub fn node_theta(&self, node: usize) -> Option<T> {
        self.node_theta[node]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.node_theta[node].is_some()
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Largest element diameter (longest corner-to-corner edge).
    pub fn h(&self) -> T {
        self.h
    }

    pub fn element_nodes(&self, element: usize) -> [Vec2<T>; 6] {
        self.triangles[element].map(|i| self.nodes[i])
    }

    pub fn reference(&self, element: usize) -> ReferenceElement<T> {
        ReferenceElement::new(self.element_nodes(element), self.curved[element])
    }

    /// Area enclosed by the (curved) mesh.
    pub fn area(&self) -> T {
        let rule = TriangleRule::<T>::of_degree(2);
        let mut total = T::zero();
        for e in 0..self.triangles.len() {
            let geo = self.element_nodes(e);
            for (q, w) in rule.points.iter().zip(&rule.weights) {
                total += *w * element::map_point(&geo, *q).1;
            }
        }
        total
    }

    /// Smallest interior angle of the straight-sided corner triangles, in degrees.
    pub fn min_angle_degrees(&self) -> T {
        let mut min = T::infinity();
        for tri in &self.triangles {
            for k in 0..3 {
                let p = self.nodes[tri[k]];
                let a = sub(self.nodes[tri[(k + 1) % 3]], p);
                let b = sub(self.nodes[tri[(k + 2) % 3]], p);
                let cos = (a[0] * b[0] + a[1] * b[1]) / (norm(a) * norm(b));
                min = min.min(cos.max(-T::one()).min(T::one()).acos());
            }
        }
        min.to_degrees()
    }

    /// Number of triangles sharing each undirected edge, keyed by corner pair.
    pub fn edge_multiplicity(&self) -> HashMap<(usize, usize), usize> {
        let mut uses = HashMap::new();
        for tri in &self.triangles {
            for (a, b) in EDGES {
                let k = if tri[a] < tri[b] {
                    (tri[a], tri[b])
                } else {
                    (tri[b], tri[a])
                };
                *uses.entry(k).or_insert(0) += 1;
            }
        }
        uses
    }

    /// For every node, the elements that contain it (ascending).
    pub fn node_elements(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (e, tri) in self.triangles.iter().enumerate() {
            for &n in tri {
                adj[n].push(e);
            }
        }
        adj
    }

    /// Writes `vertices.csv` and `triangles.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let mut nodes = String::from("node,x,y,boundary,theta\n");
        for (i, p) in self.nodes.iter().enumerate() {
            let theta = self.node_theta[i].map(|t| t.as_f64().to_string()).unwrap_or_default();
            nodes.push_str(&format!(
                "{i},{},{},{},{theta}\n",
                p[0].as_f64(),
                p[1].as_f64(),
                u8::from(self.node_theta[i].is_some())
            ));
        }
        crate::output::write_atomic(&dir.join("vertices.csv"), nodes.as_bytes())?;
        let mut tris = Vec::new();
        writeln!(tris, "element,n0,n1,n2,n3,n4,n5").unwrap();
        for (e, t) in self.triangles.iter().enumerate() {
            writeln!(tris, "{e},{},{},{},{},{},{}", t[0], t[1], t[2], t[3], t[4], t[5]).unwrap();
        }
        crate::output::write_atomic(&dir.join("triangles.csv"), &tris)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ellipse() -> StarDomain<f64> {
        StarDomain::ellipse(2.0, 1.0).unwrap()
    }

    #[test]
    fn unit_circle_boundary_nodes_on_circle() {
        let d = StarDomain::<f64>::circle(1.0).unwrap();
        let m = TriMesh::build(&d, 0).unwrap();
        let mut count = 0;
        for (i, p) in m.nodes().iter().enumerate() {
            if m.is_boundary(i) {
                assert!((norm(*p) - 1.0).abs() < 1e-14);
                count += 1;
            }
        }
        assert_eq!(count, 12 * DEFAULT_BASE_RINGS);
    }

    #[test]
    fn boundary_nodes_follow_parameterization() {
        let d = StarDomain::<f64>::fourier(1.0, vec![0.0, 0.1, 0.05], vec![0.02]).unwrap();
        let m = TriMesh::build(&d, 2).unwrap();
        for (i, p) in m.nodes().iter().enumerate() {
            if let Some(t) = m.node_theta(i) {
                assert!((norm(*p) - d.radial(t).0).abs() < 1e-13);
                assert!((p[1].atan2(p[0]).rem_euclid(2.0 * std::f64::consts::PI) - t).abs() < 1e-12 || t.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn triangle_count_quadruples() {
        let d = ellipse();
        let m0 = TriMesh::build(&d, 0).unwrap();
        assert_eq!(m0.triangles().len(), 6 * DEFAULT_BASE_RINGS * DEFAULT_BASE_RINGS);
        for level in 1..4 {
            let m = TriMesh::build(&d, level).unwrap();
            assert_eq!(m.triangles().len(), 4usize.pow(level as u32) * m0.triangles().len());
        }
    }

    #[test]
    fn conforming_edges() {
        let m = TriMesh::build(&ellipse(), 2).unwrap();
        let uses = m.edge_multiplicity();
        assert!(uses.values().all(|&c| c == 1 || c == 2));
        let boundary = uses.values().filter(|&&c| c == 1).count();
        assert_eq!(boundary, m.boundary_edges().len());
        // Euler characteristic of a disc: V - E + F = 1 on the corner graph
        let v = m.vertex_count() as i64;
        assert_eq!(v - uses.len() as i64 + m.triangles().len() as i64, 1);
    }

    #[test]
    fn mesh_size_halves() {
        let d = StarDomain::<f64>::circle(1.0).unwrap();
        let mut m = TriMesh::build(&d, 0).unwrap();
        for _ in 0..4 {
            let f = m.refine().unwrap();
            let ratio = f.h() / m.h();
            assert!((0.4..=0.6).contains(&ratio), "{ratio}");
            m = f;
        }
    }

    #[test]
    fn minimum_angle_on_test_domains() {
        let domains = [
            StarDomain::<f64>::circle(1.0).unwrap(),
            ellipse(),
            StarDomain::ellipse(1.2, 1.0 / 1.2).unwrap(),
            StarDomain::fourier(1.0, vec![0.0, 0.0, 0.1], vec![]).unwrap(),
            StarDomain::fourier(1.0, vec![0.0, 0.0, 0.0, 0.05], vec![]).unwrap(),
        ];
        for d in &domains {
            for level in 0..4 {
                let a = TriMesh::build(d, level).unwrap().min_angle_degrees();
                assert!(a >= 15.0, "{:?} level {level}: {a}", d.shape());
            }
        }
    }

    #[test]
    fn area_converges_with_high_order() {
        let d = ellipse();
        let exact = 2.0 * std::f64::consts::PI;
        let errors: Vec<f64> = (0..5)
            .map(|l| (TriMesh::build(&d, l).unwrap().area() - exact).abs())
            .collect();
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 3.0, "{errors:?}");
        }
    }

    #[test]
    fn level_cap_is_enforced() {
        let d = StarDomain::<f64>::circle(1.0).unwrap();
        assert!(matches!(TriMesh::build(&d, LEVEL_CAP + 1), Err(Error::LevelCap { .. })));
    }

    #[test]
    fn boundary_edges_cover_the_circle_once() {
        let m = TriMesh::build(&ellipse(), 1).unwrap();
        let total: f64 = m.boundary_edges().iter().map(|e| e.theta_span).sum();
        assert!((total - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }
}
