//! Exact differential geometry of smooth star-shaped planar domains.
//!
//! A domain is described by its radial function about a center `c`,
//!
//! ```text
//! x(θ) = c + r(θ - φ) (cos θ, sin θ)
//! ```
//!
//! where `r` is either a finite trigonometric series
//! `c0 + Σ a_k cos kθ + b_k sin kθ` or the polar form of an axis-aligned
//! ellipse, and `φ` is an optional rotation. Tangents, normals and curvature
//! come from term-wise differentiation, so they are exact up to rounding.
//! Boundary integrals use the periodic trapezoid rule, which is spectrally
//! accurate for these integrands.

use crate::error::{Error, Result};
use crate::optimize::{coordinate_search, golden_section};
use crate::quadrature::LineRule;
use crate::real::{norm, sub, Real, Vec2};

/// Largest number of Fourier modes accepted for a series domain.
pub const MAX_MODES: usize = 64;

/// Number of equispaced angles on which positivity of `r` is checked.
const VALIDATION_SAMPLES: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape<T> {
    /// `r(θ) = c0 + Σ_{k>=1} cos[k-1] cos kθ + sin[k-1] sin kθ`.
    Fourier { c0: T, cos: Vec<T>, sin: Vec<T> },
    /// Ellipse with semi-axes `a` (along x) and `b` (along y).
    Ellipse { a: T, b: T },
}

/// Smooth closed star-shaped boundary together with its interior.
#[derive(Debug, Clone, PartialEq)]
pub struct StarDomain<T> {
    shape: Shape<T>,
    center: Vec2<T>,
    rotation: T,
}

/// Geometry of the boundary at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySample<T> {
    pub theta: T,
    pub point: Vec2<T>,
    /// Unit outward normal.
    pub normal: Vec2<T>,
    /// Signed curvature, positive for convex arcs.
    pub curvature: T,
    /// Arc-length quadrature weight.
    pub weight: T,
    /// `x · ν` with `x` measured from the coordinate origin.
    pub support: T,
    /// `|dx/dθ|`.
    pub speed: T,
}

/// Radii of the largest inner and smallest outer circle centred at `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TouchingRadii<T> {
    pub inner: T,
    pub outer: T,
    /// Whether `z` lies inside the domain.
    pub inside: bool,
}

impl<T: Real> TouchingRadii<T> {
    pub fn gap(&self) -> T {
        self.outer - self.inner
    }
}

impl<T: Real> StarDomain<T> {
    pub fn fourier(c0: T, cos: Vec<T>, sin: Vec<T>) -> Result<Self> {
        let modes = cos.len().max(sin.len());
        if modes > MAX_MODES {
            return Err(Error::InvalidDomain(format!(
                "{modes} Fourier modes exceed the cap of {MAX_MODES}"
            )));
        }
        let mut cos = cos;
        let mut sin = sin;
        cos.resize(modes, T::zero());
        sin.resize(modes, T::zero());
        // trailing zero modes carry no information
        while cos.last().is_some_and(|v| v.is_zero()) && sin.last().is_some_and(|v| v.is_zero()) {
            cos.pop();
            sin.pop();
        }
        let domain = Self {
            shape: Shape::Fourier { c0, cos, sin },
            center: [T::zero(); 2],
            rotation: T::zero(),
        };
        domain.validate()?;
        Ok(domain)
    }

    pub fn circle(radius: T) -> Result<Self> {
        Self::fourier(radius, Vec::new(), Vec::new())
    }

    pub fn ellipse(a: T, b: T) -> Result<Self> {
        if !(a > T::zero() && b > T::zero()) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidDomain(format!(
                "ellipse semi-axes must be positive, got ({a}, {b})"
            )));
        }
        Ok(Self {
            shape: Shape::Ellipse { a, b },
            center: [T::zero(); 2],
            rotation: T::zero(),
        })
    }

    pub fn translated(&self, v: Vec2<T>) -> Self {
        let mut d = self.clone();
        d.center = [d.center[0] + v[0], d.center[1] + v[1]];
        d
    }

    /// The same domain rotated counter-clockwise by `angle` about its center.
    pub fn rotated(&self, angle: T) -> Self {
        let mut d = self.clone();
        d.rotation += angle;
        d
    }

    pub fn shape(&self) -> &Shape<T> {
        &self.shape
    }

    pub fn center(&self) -> Vec2<T> {
        self.center
    }

    pub fn rotation(&self) -> T {
        self.rotation
    }

    pub fn is_ellipse(&self) -> bool {
        matches!(self.shape, Shape::Ellipse { .. })
    }

    /// Number of Fourier modes (zero for ellipses).
    pub fn modes(&self) -> usize {
        match &self.shape {
            Shape::Fourier { cos, .. } => cos.len(),
            Shape::Ellipse { .. } => 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let m = VALIDATION_SAMPLES.max(64 * self.modes());
        for j in 0..m {
            let theta = T::c(2.0 * std::f64::consts::PI * j as f64 / m as f64);
            let (r, ..) = self.radial(theta);
            if !(r > T::zero()) || !r.is_finite() {
                return Err(Error::NonPositiveRadius {
                    theta: theta.as_f64(),
                    radius: r.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// `(r, r', r'')` at polar angle `theta` about the domain center.
    pub fn radial(&self, theta: T) -> (T, T, T) {
        let t = theta - self.rotation;
        match &self.shape {
            Shape::Fourier { c0, cos, sin } => {
                let (s1, c1) = t.sin_cos();
                let (mut sk, mut ck) = (s1, c1);
                let (mut r, mut d1, mut d2) = (*c0, T::zero(), T::zero());
                for (k, (a, b)) in cos.iter().zip(sin).enumerate() {
                    let kf = T::from_usize_lossy(k + 1);
                    r += *a * ck + *b * sk;
                    d1 += kf * (*b * ck - *a * sk);
                    d2 -= kf * kf * (*a * ck + *b * sk);
                    let next_c = ck * c1 - sk * s1;
                    sk = sk * c1 + ck * s1;
                    ck = next_c;
                }
                (r, d1, d2)
            }
            Shape::Ellipse { a, b } => {
                let (s, c) = t.sin_cos();
                let (a2, b2) = (*a * *a, *b * *b);
                let d = b2 * c * c + a2 * s * s;
                let dd = (a2 - b2) * T::c(2.0) * s * c;
                let ddd = (a2 - b2) * T::c(2.0) * (c * c - s * s);
                let ab = *a * *b;
                let r = ab / d.sqrt();
                let r1 = -T::c(0.5) * ab * dd / (d * d.sqrt());
                let r2 = ab * (T::c(0.75) * dd * dd / (d * d * d.sqrt()) - T::c(0.5) * ddd / (d * d.sqrt()));
                (r, r1, r2)
            }
        }
    }

    /// Boundary point at polar angle `theta`.
    pub fn point(&self, theta: T) -> Vec2<T> {
        let (r, ..) = self.radial(theta);
        let (s, c) = theta.sin_cos();
        [self.center[0] + r * c, self.center[1] + r * s]
    }

    /// Boundary geometry at `theta`; the quadrature weight is left at zero.
    pub fn sample(&self, theta: T) -> BoundarySample<T> {
        let (r, r1, r2) = self.radial(theta);
        let (s, c) = theta.sin_cos();
        let point = [self.center[0] + r * c, self.center[1] + r * s];
        let tangent = [r1 * c - r * s, r1 * s + r * c];
        let speed = norm(tangent);
        let normal = [tangent[1] / speed, -tangent[0] / speed];
        let curvature = (r * r + T::c(2.0) * r1 * r1 - r * r2) / (speed * speed * speed);
        BoundarySample {
            theta,
            point,
            normal,
            curvature,
            weight: T::zero(),
            support: point[0] * normal[0] + point[1] * normal[1],
            speed,
        }
    }

    /// `m` equispaced samples with trapezoid arc-length weights.
    pub fn sample_boundary(&self, m: usize) -> Result<Vec<BoundarySample<T>>> {
        if m < 16 {
            return Err(Error::Config(format!("boundary sample count {m} is below 16")));
        }
        let dtheta = T::c(2.0 * std::f64::consts::PI / m as f64);
        (0..m)
            .map(|j| {
                let theta = T::from_usize_lossy(j) * dtheta;
                let mut s = self.sample(theta);
                if !(self.radial(theta).0 > T::zero()) {
                    return Err(Error::NonPositiveRadius {
                        theta: theta.as_f64(),
                        radius: self.radial(theta).0.as_f64(),
                    });
                }
                s.weight = s.speed * dtheta;
                Ok(s)
            })
            .collect()
    }

    /// Periodic trapezoid rule for `∫ f(θ) dθ` over one period, doubling the
    /// sample count until the relative change drops below `tol`.
    fn periodic_integral<const K: usize>(&self, f: impl Fn(T) -> [T; K], tol: T) -> [T; K] {
        let mut m = 64usize;
        let eval = |m: usize| {
            let dtheta = T::c(2.0 * std::f64::consts::PI / m as f64);
            let mut acc = [T::zero(); K];
            for j in 0..m {
                let v = f(T::from_usize_lossy(j) * dtheta);
                for (a, v) in acc.iter_mut().zip(v) {
                    *a += v;
                }
            }
            acc.map(|a| a * dtheta)
        };
        let mut prev = eval(m);
        loop {
            m *= 2;
            let next = eval(m);
            let converged = prev
                .iter()
                .zip(&next)
                .all(|(p, n)| (*n - *p).abs() <= tol * n.abs().max(T::min_positive_value()));
            if converged || m >= 1 << 20 {
                return next;
            }
            prev = next;
        }
    }

    /// `(|Ω|, |Γ|)`.
    pub fn area_perimeter(&self) -> (T, T) {
        let [area, perimeter] = self.periodic_integral(
            |theta| {
                let (r, r1, _) = self.radial(theta);
                [T::c(0.5) * r * r, (r * r + r1 * r1).sqrt()]
            },
            T::tol(1e-12),
        );
        (area, perimeter)
    }

    /// `(R, H0)` with `R = 2|Ω|/|Γ|` and `H0 = 1/R`.
    pub fn reference_constants(&self) -> (T, T) {
        let (area, perimeter) = self.area_perimeter();
        let radius = T::c(2.0) * area / perimeter;
        (radius, radius.recip())
    }

    /// Area centroid.
    pub fn centroid(&self) -> Vec2<T> {
        let [a, mx, my] = self.periodic_integral(
            |theta| {
                let (r, ..) = self.radial(theta);
                let (s, c) = theta.sin_cos();
                let r3 = r * r * r / T::c(3.0);
                [T::c(0.5) * r * r, r3 * c, r3 * s]
            },
            T::tol(1e-13),
        );
        [self.center[0] + mx / a, self.center[1] + my / a]
    }

    /// Whether `p` lies strictly inside the domain.
    pub fn contains(&self, p: Vec2<T>) -> bool {
        let d = sub(p, self.center);
        let rho = norm(d);
        if rho.is_zero() {
            return true;
        }
        rho < self.radial(d[1].atan2(d[0])).0
    }

    /// Minimum curvature over `m` equispaced samples.
    pub fn min_curvature(&self, m: usize) -> T {
        (0..m)
            .map(|j| {
                self.sample(T::c(2.0 * std::f64::consts::PI * j as f64 / m as f64))
                    .curvature
            })
            .fold(T::infinity(), T::min)
    }

    /// Radii of the concentric circles about `z` that sandwich the boundary.
    pub fn touching_radii(&self, z: Vec2<T>) -> TouchingRadii<T> {
        let m = 2048usize.max(32 * self.modes());
        let dtheta = T::c(2.0 * std::f64::consts::PI / m as f64);
        let dist = |theta: T| norm(sub(self.point(theta), z));
        let values: Vec<T> = (0..m).map(|j| dist(T::from_usize_lossy(j) * dtheta)).collect();
        let (mut jmin, mut jmax) = (0, 0);
        for (j, v) in values.iter().enumerate() {
            if *v < values[jmin] {
                jmin = j;
            }
            if *v > values[jmax] {
                jmax = j;
            }
        }
        let tol = T::tol(1e-13);
        let bracket = |j: usize| {
            let t = T::from_usize_lossy(j) * dtheta;
            (t - dtheta, t + dtheta)
        };
        let (a, b) = bracket(jmin);
        let (_, inner) = golden_section(dist, a, b, tol);
        let (a, b) = bracket(jmax);
        let (_, neg_outer) = golden_section(|t| -dist(t), a, b, tol);
        TouchingRadii {
            inner: inner.min(values[jmin]),
            outer: (-neg_outer).max(values[jmax]),
            inside: self.contains(z),
        }
    }

    /// `|Ω Δ B|` for the disc `B` of the given radius centred at `ball_center`.
    pub fn symmetric_difference_area(&self, ball_center: Vec2<T>, radius: T) -> T {
        let y = sub(ball_center, self.center);
        if norm(y) < T::c(0.999) * radius {
            self.symmetric_difference_polar(y, radius)
        } else {
            self.symmetric_difference_grid(ball_center, radius, 2048)
        }
    }

    /// Both sets are star-shaped about the domain center; integrate
    /// `½ |r² - r_B²|` in θ, splitting at the crossings.
    fn symmetric_difference_polar(&self, y: Vec2<T>, radius: T) -> T {
        let two_pi = T::c(2.0 * std::f64::consts::PI);
        let g = |theta: T| {
            let (s, c) = theta.sin_cos();
            let ye = y[0] * c + y[1] * s;
            let rb = ye + (radius * radius - (y[0] * y[0] + y[1] * y[1]) + ye * ye).sqrt();
            let (r, ..) = self.radial(theta);
            r * r - rb * rb
        };
        let m = 512usize.max(16 * self.modes());
        let dtheta = two_pi / T::from_usize_lossy(m);
        let mut cuts = vec![T::zero()];
        let mut prev = g(T::zero());
        for j in 1..=m {
            let t1 = T::from_usize_lossy(j) * dtheta;
            let v = g(t1);
            if (prev < T::zero()) != (v < T::zero()) && !prev.is_zero() && !v.is_zero() {
                // bisection on the bracketing cell
                let (mut a, mut b, mut ga) = (t1 - dtheta, t1, prev);
                for _ in 0..80 {
                    let mid = T::c(0.5) * (a + b);
                    let gm = g(mid);
                    if (gm < T::zero()) == (ga < T::zero()) {
                        a = mid;
                        ga = gm;
                    } else {
                        b = mid;
                    }
                }
                cuts.push(T::c(0.5) * (a + b));
            }
            prev = v;
        }
        cuts.push(two_pi);
        let rule = LineRule::<T>::new(8);
        let max_piece = two_pi / T::c(128.0);
        let mut total = T::zero();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let pieces = ((b - a) / max_piece).ceil().to_usize().unwrap_or(1).max(1);
            let len = (b - a) / T::from_usize_lossy(pieces);
            let mut seg = T::zero();
            for p in 0..pieces {
                let lo = a + T::from_usize_lossy(p) * len;
                for (x, wt) in rule.iter() {
                    seg += wt * len * g(lo + x * len);
                }
            }
            total += seg.abs();
        }
        T::c(0.5) * total
    }

    /// Midpoint-rule indicator integration on an `n × n` grid.
    pub fn symmetric_difference_grid(&self, ball_center: Vec2<T>, radius: T, n: usize) -> T {
        let (lo, hi) = self.bounding_box();
        let x0 = lo[0].min(ball_center[0] - radius);
        let y0 = lo[1].min(ball_center[1] - radius);
        let x1 = hi[0].max(ball_center[0] + radius);
        let y1 = hi[1].max(ball_center[1] + radius);
        let dx = (x1 - x0) / T::from_usize_lossy(n);
        let dy = (y1 - y0) / T::from_usize_lossy(n);
        let half = T::c(0.5);
        let mut count = 0usize;
        for i in 0..n {
            let x = x0 + (T::from_usize_lossy(i) + half) * dx;
            for j in 0..n {
                let y = y0 + (T::from_usize_lossy(j) + half) * dy;
                let in_ball = norm(sub([x, y], ball_center)) < radius;
                if in_ball != self.contains([x, y]) {
                    count += 1;
                }
            }
        }
        T::from_usize_lossy(count) * dx * dy
    }

    /// Axis-aligned bounding box of the boundary (sampled, padded by 1%).
    pub fn bounding_box(&self) -> (Vec2<T>, Vec2<T>) {
        let m = 1024;
        let mut lo = [T::infinity(); 2];
        let mut hi = [T::neg_infinity(); 2];
        for j in 0..m {
            let p = self.point(T::c(2.0 * std::f64::consts::PI * j as f64 / m as f64));
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let pad = T::c(0.01) * (hi[0] - lo[0]).max(hi[1] - lo[1]);
        ([lo[0] - pad, lo[1] - pad], [hi[0] + pad, hi[1] + pad])
    }

    /// Infimum over centers `x` of `|Ω Δ B_R(x)| / |B_R|`.
    pub fn fraenkel_asymmetry(&self, radius: T) -> T {
        let ball = T::PI() * radius * radius;
        let start = self.centroid();
        let (_, value) = coordinate_search(
            |x| self.symmetric_difference_area(x, radius) / ball,
            start,
            T::c(0.1) * radius,
            T::c(1e-6),
        );
        value
    }

    /// Best-fit circle in the uniform sense: minimises over centers `z` the
    /// half-width `(max |x - z| - min |x - z|) / 2` of the boundary annulus.
    /// Returns `(distance, center, radius)`.
    pub fn circle_distance(&self, m: usize) -> (T, Vec2<T>, T) {
        let pts: Vec<Vec2<T>> = (0..m)
            .map(|j| self.point(T::c(2.0 * std::f64::consts::PI * j as f64 / m as f64)))
            .collect();
        let spread = |z: Vec2<T>| {
            let mut lo = T::infinity();
            let mut hi = T::neg_infinity();
            for p in &pts {
                let d = norm(sub(*p, z));
                lo = lo.min(d);
                hi = hi.max(d);
            }
            (lo, hi)
        };
        let (r0, _) = self.reference_constants();
        let (z, half_width) = coordinate_search(
            |z| {
                let (lo, hi) = spread(z);
                T::c(0.5) * (hi - lo)
            },
            self.centroid(),
            T::c(0.05) * r0,
            T::c(1e-9) * r0,
        );
        let (lo, hi) = spread(z);
        (half_width, z, T::c(0.5) * (lo + hi))
    }

    /// Equivalent series with the rotation folded into the coefficients.
    /// Ellipses are projected onto `modes` Fourier modes.
    pub fn to_fourier(&self, modes: usize) -> Result<Self> {
        let (c0, cos, sin) = match &self.shape {
            Shape::Fourier { c0, cos, sin } => {
                let mut ca = Vec::with_capacity(cos.len());
                let mut sa = Vec::with_capacity(sin.len());
                for (k, (a, b)) in cos.iter().zip(sin).enumerate() {
                    let (s, c) = (T::from_usize_lossy(k + 1) * self.rotation).sin_cos();
                    ca.push(*a * c - *b * s);
                    sa.push(*a * s + *b * c);
                }
                (*c0, ca, sa)
            }
            Shape::Ellipse { .. } => {
                let m = 8 * modes.max(16);
                let values: Vec<T> = (0..m)
                    .map(|j| self.radial(T::c(2.0 * std::f64::consts::PI * j as f64 / m as f64)).0)
                    .collect();
                let (c0, ca, sa) = fourier_coefficients(&values, modes);
                (c0, ca, sa)
            }
        };
        let mut d = Self::fourier(c0, cos, sin)?;
        d.center = self.center;
        Ok(d)
    }

    /// Series domain `r + eps * δr`, for a perturbation given by its cosine
    /// and sine coefficients (mode `k` at index `k - 1`).
    pub fn perturbed(&self, cos: &[T], sin: &[T], eps: T) -> Result<Self> {
        let base = self.to_fourier(MAX_MODES)?;
        let Shape::Fourier { c0, cos: bc, sin: bs } = base.shape else {
            unreachable!()
        };
        let n = bc.len().max(cos.len()).max(sin.len());
        let get = |v: &[T], k: usize| v.get(k).copied().unwrap_or(T::zero());
        let ca = (0..n).map(|k| get(&bc, k) + eps * get(cos, k)).collect();
        let sa = (0..n).map(|k| get(&bs, k) + eps * get(sin, k)).collect();
        let mut d = Self::fourier(c0, ca, sa)?;
        d.center = self.center;
        Ok(d)
    }

    /// Converts the scalar type.
    pub fn cast<S: Real>(&self) -> StarDomain<S> {
        let c = crate::real::cast::<T, S>;
        StarDomain {
            shape: match &self.shape {
                Shape::Fourier { c0, cos, sin } => Shape::Fourier {
                    c0: c(*c0),
                    cos: cos.iter().map(|v| c(*v)).collect(),
                    sin: sin.iter().map(|v| c(*v)).collect(),
                },
                Shape::Ellipse { a, b } => Shape::Ellipse { a: c(*a), b: c(*b) },
            },
            center: [c(self.center[0]), c(self.center[1])],
            rotation: c(self.rotation),
        }
    }
}

/// Discrete Fourier coefficients `(c0, cos, sin)` of equispaced samples of a
/// periodic function, truncated to `modes` modes.
pub fn fourier_coefficients<T: Real>(values: &[T], modes: usize) -> (T, Vec<T>, Vec<T>) {
    let m = values.len();
    let mf = T::from_usize_lossy(m);
    let two = T::c(2.0);
    let c0 = values.iter().copied().sum::<T>() / mf;
    let mut cos = Vec::with_capacity(modes);
    let mut sin = Vec::with_capacity(modes);
    for k in 1..=modes.min((m - 1) / 2) {
        let (mut a, mut b) = (T::zero(), T::zero());
        for (j, v) in values.iter().enumerate() {
            let t = T::c(2.0 * std::f64::consts::PI * ((k * j) % m) as f64 / m as f64);
            let (s, c) = t.sin_cos();
            a += *v * c;
            b += *v * s;
        }
        cos.push(two * a / mf);
        sin.push(two * b / mf);
    }
    (c0, cos, sin)
}
