//! Shape derivatives of torsional rigidity and volume under normal boundary
//! speeds, and the flow driven by the speed `φ* = (q_ν - u_ν)/2`.
//!
//! Sign convention: a speed `φ > 0` moves the boundary outward. With it,
//! `dτ/dt = ∫_Γ φ u_ν² dS` and `d|Ω|/dt = ∫_Γ φ dS` (torsional rigidity
//! grows under inclusion, which the finite difference tests confirm). The
//! convention with `u' = ∇u·ℛ` on Γ gives the opposite sign for `τ'`; both
//! are reported by [`torsion_derivative_both`].
//!
//! Along `φ*` the first variation of `J = τ + R²(V - |Ω|)` equals minus the
//! weighted hessian integral `∫(-u)(|∇²u|² - (Δu)²/N)`, so `J` decreases,
//! and the boundary moves outward where `q_ν > u_ν`, which elongates
//! ellipses. The opposite orientation rounds domains off while `J` grows.
//! [`FlowDirection`] selects between the two.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Category, Error, Result};
use crate::geometry::{fourier_coefficients, StarDomain, MAX_MODES};
use crate::identities;
use crate::mesh::TriMesh;
use crate::output::Table;
use crate::real::{dot, Real};
use crate::torsion::{solve_torsion_with, SolveOptions, TorsionSolution};

/// Trigonometric boundary speed `φ(θ) = c0 + Σ a_k cos kθ + b_k sin kθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Speed<T> {
    pub c0: T,
    pub cos: Vec<T>,
    pub sin: Vec<T>,
}

impl<T: Real> Speed<T> {
    pub fn constant(c: T) -> Self {
        Self {
            c0: c,
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    pub fn eval(&self, theta: T) -> T {
        let mut v = self.c0;
        for (k, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let (s, c) = (T::from_usize_lossy(k + 1) * theta).sin_cos();
            v += *a * c + *b * s;
        }
        v
    }

    /// Seeded speed with coefficients uniform in `[-1, 1] / (k + 1)` for
    /// modes `0..=modes`.
    pub fn random(seed: u64, modes: usize) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |k: usize| T::c(rng.gen_range(-1.0..=1.0) / (k + 1) as f64);
        let c0 = draw(0);
        let (mut cos, mut sin) = (Vec::with_capacity(modes), Vec::with_capacity(modes));
        for k in 1..=modes {
            cos.push(draw(k));
            sin.push(draw(k));
        }
        Self { c0, cos, sin }
    }
}

/// `V'(0) = ∫_Γ φ dS` with `m` spectral samples; `phi` is a function of the
/// boundary parameter θ.
pub fn volume_derivative<T: Real>(domain: &StarDomain<T>, phi: impl Fn(T) -> T, m: usize) -> Result<T> {
    Ok(domain.sample_boundary(m)?.iter().map(|s| s.weight * phi(s.theta)).sum())
}

/// `dτ/dt = ∫_Γ φ u_ν² dS`, outward speeds increasing `τ`.
pub fn torsion_derivative<T: Real>(sol: &TorsionSolution<T>, phi: impl Fn(T) -> T) -> T {
    sol.boundary_integral(|p| phi(p.theta) * p.flux * p.flux)
}

/// `(physical, with u' = ∇u·ℛ)`: the two signed values of `τ'(0)`.
pub fn torsion_derivative_both<T: Real>(sol: &TorsionSolution<T>, phi: impl Fn(T) -> T) -> (T, T) {
    let d = torsion_derivative(sol, phi);
    (d, -d)
}

/// First variation of `J` under `φ*`, next to the weighted hessian integral
/// it should match in absolute value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagrangeReport {
    /// `dJ/dt = ∫ φ* (u_ν² - R²) dS` (outward positive speeds).
    pub variation: f64,
    /// `T'(0) + R² V'(0)` with `T'(0) = -∫ φ* u_ν²` (the `u' = ∇u·ℛ` convention).
    pub variation_alt: f64,
    /// `∫(-u)(|∇²u|² - (Δu)²/N)`.
    pub idwps_lhs: f64,
}

impl LagrangeReport {
    /// `| |variation| - idwps | / idwps`.
    pub fn relative_mismatch(&self) -> f64 {
        (self.variation.abs() - self.idwps_lhs).abs() / self.idwps_lhs.abs().max(1e-300)
    }
}

/// `φ* = (q_ν - u_ν)/2` at boundary parameter `theta`.
pub fn privileged_speed<T: Real>(sol: &TorsionSolution<T>, theta: T) -> T {
    let s = sol.mesh().domain().sample(theta);
    let z = sol.z();
    let qn = dot([s.point[0] - z[0], s.point[1] - z[1]], s.normal);
    T::c(0.5) * (qn - sol.flux_at(theta))
}

pub fn lagrange_residual<T: Real>(sol: &TorsionSolution<T>) -> LagrangeReport {
    let r2 = sol.radius() * sol.radius();
    let half = T::c(0.5);
    let (mut tp, mut vp) = (T::zero(), T::zero());
    for p in sol.boundary_points() {
        let phi = half * (sol.q_normal(p) - p.flux);
        tp += p.weight * phi * p.flux * p.flux;
        vp += p.weight * phi;
    }
    LagrangeReport {
        variation: (tp - r2 * vp).as_f64(),
        variation_alt: (-tp + r2 * vp).as_f64(),
        idwps_lhs: identities::check_fundamental_serrin(sol).lhs,
    }
}

/// Samples on which radial updates are formed and projected.
fn update_samples(modes: usize) -> usize {
    (8 * modes).max(256)
}

/// The domain displaced by `t φ` along the normal, to first order in `t`:
/// `r ↦ r + t φ / (ν·e_r)` projected onto `modes` Fourier modes about the
/// domain center. Returns the new domain and the fraction of the update's
/// energy beyond `modes`.
pub fn displaced<T: Real>(
    domain: &StarDomain<T>,
    phi: impl Fn(T) -> T,
    t: T,
    modes: usize,
) -> Result<(StarDomain<T>, T)> {
    let modes = modes.min(MAX_MODES);
    let m = update_samples(modes);
    let c = domain.center();
    let mut r = Vec::with_capacity(m);
    let mut dr = Vec::with_capacity(m);
    for j in 0..m {
        let theta = T::c(2.0 * std::f64::consts::PI * j as f64 / m as f64);
        let s = domain.sample(theta);
        let er = [s.point[0] - c[0], s.point[1] - c[1]];
        let radius = er[0].hypot(er[1]);
        let cosine = dot(s.normal, [er[0] / radius, er[1] / radius]);
        if !(cosine > T::zero()) {
            return Err(Error::InvalidDomain(format!(
                "normal is not outward radial at theta = {:.6}",
                theta.as_f64()
            )));
        }
        r.push(radius);
        dr.push(t * phi(theta) / cosine);
    }
    // energy of the update beyond the retained modes
    let (d0, dc, ds) = fourier_coefficients(&dr, (m - 1) / 2);
    let energy = |from: usize, to: usize| -> T { (from..to).map(|k| dc[k] * dc[k] + ds[k] * ds[k]).sum::<T>() };
    let total = T::c(2.0) * d0 * d0 + energy(0, dc.len());
    let tail = if total > T::zero() {
        energy(modes.min(dc.len()), dc.len()) / total
    } else {
        T::zero()
    };
    let values: Vec<T> = r.iter().zip(&dr).map(|(a, b)| *a + *b).collect();
    let (c0, cos, sin) = fourier_coefficients(&values, modes);
    let next = StarDomain::fourier(c0, cos, sin)?.translated(c);
    Ok((next, tail))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowDirection {
    /// Orientation for which `J` does not increase (the stated flow).
    #[default]
    Descent,
    /// The mirror flow, along which `J` does not decrease.
    Ascent,
}

#[derive(Debug, Clone)]
pub struct FlowOptions {
    pub dt: f64,
    pub max_steps: usize,
    pub level: usize,
    /// Keep `R` at its initial value (otherwise recomputed per step).
    pub freeze_r: bool,
    pub direction: FlowDirection,
    /// Stop once the circle distance falls below this.
    pub target_distance: f64,
    /// Fourier modes retained by the re-projection.
    pub modes: usize,
    /// Largest admissible fraction of update energy beyond `modes`.
    pub max_tail: f64,
    /// Steps are rejected below this step size.
    pub min_dt: f64,
    /// Boundary samples for the circle distance.
    pub samples: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            dt: 0.05,
            max_steps: 500,
            level: 4,
            freeze_r: true,
            direction: FlowDirection::Descent,
            target_distance: 1e-3,
            modes: 32,
            max_tail: 0.01,
            min_dt: 1e-8,
            samples: 512,
        }
    }
}

/// One accepted state of the flow.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub step: usize,
    pub domain: StarDomain<f64>,
    pub t: f64,
    /// Step size that produced this state (zero initially).
    pub dt: f64,
    pub tau: f64,
    pub area: f64,
    /// Target volume, the initial area.
    pub volume: f64,
    /// Reference radius used in `J`.
    pub r: f64,
    /// `τ + R²(V - |Ω|)`.
    pub j: f64,
    pub circle_distance: f64,
    /// `‖u_ν - R_t‖₂,Γ` with the current domain's own `R_t`.
    pub flux_deviation: f64,
    /// `dJ/dt` along the flow speed at this state.
    pub variation: f64,
    /// Tail energy fraction of the update that produced this state.
    pub tail: f64,
    solution: Arc<TorsionSolution<f64>>,
}

impl FlowState {
    pub fn solution(&self) -> &TorsionSolution<f64> {
        &self.solution
    }

    fn new(
        step: usize,
        domain: StarDomain<f64>,
        solution: TorsionSolution<f64>,
        frame: (f64, f64, f64, f64, f64),
        options: &FlowOptions,
    ) -> Self {
        let (t, dt, volume, r0, tail) = frame;
        let r = if options.freeze_r { r0 } else { solution.radius() };
        let (area, _) = domain.area_perimeter();
        let tau = solution.tau();
        let sign = direction_sign(&solution, r, options.direction);
        let variation = sign * speed_variation(&solution, r);
        Self {
            step,
            t,
            dt,
            tau,
            area,
            volume,
            r,
            j: tau + r * r * (volume - area),
            circle_distance: domain.circle_distance(options.samples).0,
            flux_deviation: solution.flux_deviation_l2(),
            variation,
            tail,
            domain,
            solution: Arc::new(solution),
        }
    }
}

/// `∫ φ* (u_ν² - R²) dS` with the given `R`.
fn speed_variation(sol: &TorsionSolution<f64>, r: f64) -> f64 {
    sol.boundary_integral(|p| 0.5 * (sol.q_normal(p) - p.flux) * (p.flux * p.flux - r * r))
}

fn direction_sign(sol: &TorsionSolution<f64>, r: f64, direction: FlowDirection) -> f64 {
    let descending = speed_variation(sol, r) <= 0.0;
    match (direction, descending) {
        (FlowDirection::Descent, true) | (FlowDirection::Ascent, false) => 1.0,
        _ => -1.0,
    }
}

fn solve_on(
    domain: &StarDomain<f64>,
    level: usize,
    warm: Option<&TorsionSolution<f64>>,
) -> Result<TorsionSolution<f64>> {
    let mesh = TriMesh::build(domain, level)?;
    let options = SolveOptions {
        initial_guess: warm
            .filter(|s| s.u().len() == mesh.node_count())
            .map(|s| s.u().to_vec()),
        ..SolveOptions::default()
    };
    solve_torsion_with(mesh, &options)
}

/// The starting state of a flow.
pub fn initial_state(domain: &StarDomain<f64>, options: &FlowOptions) -> Result<FlowState> {
    let domain = domain.to_fourier(options.modes.min(MAX_MODES))?;
    let sol = solve_on(&domain, options.level, None)?;
    let (area, _) = domain.area_perimeter();
    let r0 = sol.radius();
    Ok(FlowState::new(0, domain, sol, (0.0, 0.0, area, r0, 0.0), options))
}

/// One accepted step from `state`, starting with step size `dt` and halving
/// it until `J` moves in the flow's direction and the update is admissible.
pub fn flow_step(state: &FlowState, dt: f64, options: &FlowOptions) -> Result<FlowState> {
    let sol = state.solution();
    let sign = direction_sign(sol, state.r, options.direction);
    let phi = |theta: f64| sign * privileged_speed(sol, theta);
    let mut dt = dt;
    let mut reason = String::from("no step attempted");
    while dt >= options.min_dt {
        match displaced(&state.domain, phi, dt, options.modes) {
            Ok((domain, tail)) if tail <= options.max_tail => {
                // a displaced domain the mesher rejects fails the invariant
                let next_sol = match solve_on(&domain, options.level, Some(sol)) {
                    Ok(s) => s,
                    Err(e) if matches!(e.category(), Category::Mesh | Category::Domain) => {
                        reason = e.to_string();
                        dt *= 0.5;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let r0 = if options.freeze_r { state.r } else { next_sol.radius() };
                let next = FlowState::new(
                    state.step + 1,
                    domain,
                    next_sol,
                    (state.t + dt, dt, state.volume, r0, tail),
                    options,
                );
                let ok = match options.direction {
                    FlowDirection::Descent => next.j <= state.j,
                    FlowDirection::Ascent => next.j >= state.j,
                };
                if ok {
                    return Ok(next);
                }
                reason = format!("J moved from {:e} to {:e}", state.j, next.j);
            }
            Ok((_, tail)) => reason = format!("update tail energy {tail:e} exceeds {:e}", options.max_tail),
            Err(e) => reason = e.to_string(),
        }
        dt *= 0.5;
    }
    Err(Error::Stagnation { t: state.t, dt, reason })
}

/// Column names of the trajectory CSV.
pub const COLUMNS: [&str; 12] = [
    "step",
    "t",
    "dt",
    "tau",
    "area",
    "volume",
    "R",
    "J",
    "circle_distance",
    "flux_deviation",
    "variation",
    "tail",
];

/// One CSV row per state, columns [`COLUMNS`].
pub fn trajectory_table(states: &[FlowState]) -> Table {
    let mut t = Table::new(&COLUMNS);
    for s in states {
        t.push(vec![
            s.step.into(),
            s.t.into(),
            s.dt.into(),
            s.tau.into(),
            s.area.into(),
            s.volume.into(),
            s.r.into(),
            s.j.into(),
            s.circle_distance.into(),
            s.flux_deviation.into(),
            s.variation.into(),
            s.tail.into(),
        ]);
    }
    t
}

/// Iterates [`flow_step`] until the circle distance drops below the target
/// or `max_steps` steps were taken. The first entry is the initial state.
pub fn run_flow(domain: &StarDomain<f64>, options: &FlowOptions) -> Result<Vec<FlowState>> {
    match run_flow_partial(domain, options)? {
        (states, None) => Ok(states),
        (_, Some(e)) => Err(e),
    }
}

/// [`run_flow`] that keeps the accepted states when a step fails. Only a
/// failure of the initial solve is returned as `Err`.
pub fn run_flow_partial(domain: &StarDomain<f64>, options: &FlowOptions) -> Result<(Vec<FlowState>, Option<Error>)> {
    if !(options.dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {}", options.dt)));
    }
    let mut states = vec![initial_state(domain, options)?];
    while states.len() <= options.max_steps {
        let last = states.last().unwrap();
        if last.circle_distance < options.target_distance {
            break;
        }
        match flow_step(last, options.dt, options) {
            Ok(next) => states.push(next),
            Err(e) => return Ok((states, Some(e))),
        }
    }
    Ok((states, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torsion::solve_torsion;

    fn solve(d: &StarDomain<f64>, level: usize) -> TorsionSolution<f64> {
        solve_torsion(TriMesh::build(d, level).unwrap()).unwrap()
    }

    #[test]
    fn circle_derivatives() {
        let d = StarDomain::circle(1.0).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!((volume_derivative(&d, |_| 1.0, 256).unwrap() - two_pi).abs() < 1e-12);
        assert!(volume_derivative(&d, |t: f64| t.cos(), 256).unwrap().abs() < 1e-12);
        assert_eq!(volume_derivative(&d, |_| 0.0, 64).unwrap(), 0.0);
        let s = solve(&d, 3);
        assert!((torsion_derivative(&s, |_| 1.0) - two_pi).abs() < 1e-6);
        assert_eq!(torsion_derivative(&s, |_| 0.0), 0.0);
        let (a, b) = torsion_derivative_both(&s, |_| 1.0);
        assert_eq!(a, -b);
    }

    #[test]
    fn displacement_matches_volume_derivative() {
        let d = StarDomain::ellipse(2.0, 1.0).unwrap();
        let phi = Speed::<f64>::random(3, 3);
        let f = |t: f64| phi.eval(t);
        let dt = 1e-3;
        let area = |t: f64| displaced(&d, f, t, 64).unwrap().0.area_perimeter().0;
        let fd = (area(dt) - area(-dt)) / (2.0 * dt);
        let exact = volume_derivative(&d, f, 1024).unwrap();
        assert!((fd - exact).abs() < 1e-6, "{fd} {exact}");
    }

    #[test]
    fn tail_energy_flags_rough_updates() {
        let d = StarDomain::circle(1.0).unwrap();
        let smooth = displaced(&d, |t: f64| (3.0 * t).cos(), 0.01, 8).unwrap().1;
        assert!(smooth < 1e-20);
        let rough = displaced(&d, |t: f64| (20.0 * t).cos(), 0.01, 8).unwrap().1;
        assert!(rough > 0.99);
    }

    #[test]
    fn lagrange_variation_matches_weighted_hessian() {
        let d = StarDomain::ellipse(2.0, 1.0).unwrap();
        let s = solve(&d, 3);
        let l = lagrange_residual(&s);
        assert!(l.variation < 0.0 && l.variation_alt > 0.0);
        assert!(l.relative_mismatch() < 1e-3, "{l:?}");
        let c = solve(&StarDomain::circle(1.0).unwrap(), 3);
        let lc = lagrange_residual(&c);
        assert!(lc.variation.abs() < 1e-6 && lc.idwps_lhs.abs() < 1e-6, "{lc:?}");
    }

    #[test]
    fn circle_is_a_fixed_point() {
        let d = StarDomain::circle(1.0).unwrap();
        let options = FlowOptions {
            level: 2,
            ..FlowOptions::default()
        };
        let states = run_flow(&d, &options).unwrap();
        assert_eq!(states.len(), 1);
        let s = &states[0];
        let (next, _) = displaced(&s.domain, |t| privileged_speed(s.solution(), t), 0.05, 32).unwrap();
        let change = (0..64)
            .map(|j| {
                let t = j as f64 * std::f64::consts::PI / 32.0;
                (next.radial(t).0 - 1.0).abs()
            })
            .fold(0.0, f64::max);
        // φ* vanishes up to the flux discretization error (~3e-6 at level 2)
        assert!(change < 0.05 * 0.5 * 1e-5, "{change}");
    }
}
