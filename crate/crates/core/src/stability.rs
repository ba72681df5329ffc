//! Deviation measures of near-circular domains and empirical stability
//! exponents along one-parameter families.

use rayon::prelude::*;
use serde::Serialize;

use crate::domain_io::FamilySpec;
use crate::error::{Error, Result};
use crate::geometry::StarDomain;
use crate::identities::{self, OscillationDiagnostics};
use crate::mesh::TriMesh;
use crate::output::{Cell, Table};
use crate::real::{norm, sub};
use crate::torsion::solve_torsion;

/// Harmonic polynomial degree of the dual norm estimate in a record.
pub const DUAL_DEGREE: usize = 12;

/// Every deviation measure of one domain. All values are non-negative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRecord {
    /// Family amplitude (zero for a standalone evaluation).
    pub epsilon: f64,
    pub level: usize,
    /// `max_Γ |H₀ - H|`.
    pub eta_sup_h: f64,
    /// `max_Γ H - min_Γ H`.
    pub eta_osc_h: f64,
    /// `∫_Γ (H₀ - H)⁺ dS`.
    pub eta_plus_h: f64,
    /// `‖H₀ - H‖₂,Γ`.
    pub eta_l2_h: f64,
    /// `‖u_ν - R‖₂,Γ`.
    pub eta_l2_flux: f64,
    /// `‖u_ν - R‖₁,Γ`.
    pub eta_l1_flux: f64,
    /// `sup |u_ν(x) - u_ν(y)| / |x - y|` over boundary node pairs.
    pub eta_lip_flux: f64,
    /// `ρ_e - ρ_i` about the minimum point of `u`.
    pub gap: f64,
    pub asym: f64,
    /// Subspace estimate of `‖L‖₂` at [`DUAL_DEGREE`].
    pub dual_norm: f64,
    /// `‖u_ν - R‖₂,Γ / (N|Ω|)`.
    pub dual_norm_closed: f64,
    /// `None` on the ball.
    pub feldman_ratio: Option<f64>,
    pub oscillation: OscillationDiagnostics,
}

/// Column names of the sweep CSV, in order.
pub const COLUMNS: [&str; 19] = [
    "epsilon",
    "level",
    "eta_sup_H",
    "eta_osc_H",
    "eta_plus_H",
    "eta_L2_H",
    "eta_L2_flux",
    "eta_L1_flux",
    "eta_lip_flux",
    "gap",
    "asym",
    "dual_norm",
    "dual_norm_closed",
    "feldman_ratio",
    "osc_h",
    "osc_lower_bound",
    "h_l2_power",
    "grad_h_l2_power",
    "weighted_hess_h_power",
];

/// A record column usable in exponent fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Epsilon,
    EtaSupH,
    EtaOscH,
    EtaPlusH,
    EtaL2H,
    EtaL2Flux,
    EtaL1Flux,
    EtaLipFlux,
    Gap,
    Asym,
    DualNorm,
}

impl Field {
    pub const ALL: [Field; 11] = [
        Field::Epsilon,
        Field::EtaSupH,
        Field::EtaOscH,
        Field::EtaPlusH,
        Field::EtaL2H,
        Field::EtaL2Flux,
        Field::EtaL1Flux,
        Field::EtaLipFlux,
        Field::Gap,
        Field::Asym,
        Field::DualNorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Epsilon => "epsilon",
            Field::EtaSupH => "eta_sup_H",
            Field::EtaOscH => "eta_osc_H",
            Field::EtaPlusH => "eta_plus_H",
            Field::EtaL2H => "eta_L2_H",
            Field::EtaL2Flux => "eta_L2_flux",
            Field::EtaL1Flux => "eta_L1_flux",
            Field::EtaLipFlux => "eta_lip_flux",
            Field::Gap => "gap",
            Field::Asym => "asym",
            Field::DualNorm => "dual_norm",
        }
    }

    pub fn parse(name: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(name))
    }

    pub fn get(self, r: &StabilityRecord) -> f64 {
        match self {
            Field::Epsilon => r.epsilon,
            Field::EtaSupH => r.eta_sup_h,
            Field::EtaOscH => r.eta_osc_h,
            Field::EtaPlusH => r.eta_plus_h,
            Field::EtaL2H => r.eta_l2_h,
            Field::EtaL2Flux => r.eta_l2_flux,
            Field::EtaL1Flux => r.eta_l1_flux,
            Field::EtaLipFlux => r.eta_lip_flux,
            Field::Gap => r.gap,
            Field::Asym => r.asym,
            Field::DualNorm => r.dual_norm,
        }
    }
}

/// The fits written by the sweep summary: `(x, y)`.
pub const DEFAULT_FITS: [(Field, Field); 3] = [
    (Field::EtaL2H, Field::Gap),
    (Field::EtaL2Flux, Field::Gap),
    (Field::EtaL2H, Field::Asym),
];

/// Curvature deviations `(sup, osc, plus, L2)` from `m` spectral samples.
pub fn curvature_deviations(domain: &StarDomain<f64>, m: usize) -> Result<[f64; 4]> {
    let samples = domain.sample_boundary(m)?;
    let (_, h0) = domain.reference_constants();
    let (mut sup, mut plus, mut l2) = (0.0f64, 0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &samples {
        let d = h0 - s.curvature;
        sup = sup.max(d.abs());
        plus += s.weight * d.max(0.0);
        l2 += s.weight * d * d;
        lo = lo.min(s.curvature);
        hi = hi.max(s.curvature);
    }
    Ok([sup, hi - lo, plus, l2.sqrt()])
}

/// Solves on `domain` at `level` and computes every measure.
pub fn evaluate_domain(domain: &StarDomain<f64>, level: usize) -> Result<StabilityRecord> {
    evaluate_domain_with(domain, level, None)
}

/// [`evaluate_domain`] with an explicit sample count for the curvature
/// measures (default [`identities::geometry_samples`]).
pub fn evaluate_domain_with(domain: &StarDomain<f64>, level: usize, samples: Option<usize>) -> Result<StabilityRecord> {
    let sol = solve_torsion(TriMesh::build(domain, level)?)?;
    let m = samples.unwrap_or_else(|| identities::geometry_samples(sol.mesh()));
    let [eta_sup_h, eta_osc_h, eta_plus_h, eta_l2_h] = curvature_deviations(domain, m)?;
    let r = sol.radius();
    let eta_l1_flux = sol.boundary_integral(|p| (p.flux - r).abs());
    let flux = sol.boundary_flux();
    let eta_lip_flux = flux
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            flux[i + 1..]
                .iter()
                .map(|b| (a.flux - b.flux).abs() / norm(sub(a.x, b.x)))
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let (dual_norm, dual_norm_closed) = identities::dual_norm(&sol, DUAL_DEGREE)?;
    Ok(StabilityRecord {
        epsilon: 0.0,
        level,
        eta_sup_h,
        eta_osc_h,
        eta_plus_h,
        eta_l2_h,
        eta_l2_flux: sol.flux_deviation_l2(),
        eta_l1_flux,
        eta_lip_flux,
        gap: domain.touching_radii(sol.z()).gap(),
        asym: domain.fraenkel_asymmetry(r),
        dual_norm,
        dual_norm_closed,
        feldman_ratio: identities::feldman_ratio(&sol),
        oscillation: identities::oscillation_diagnostics(&sol),
    })
}

/// Evaluates every family member concurrently; records come back ordered
/// by amplitude.
pub fn sweep(family: &FamilySpec) -> Result<Vec<StabilityRecord>> {
    sweep_with(family, None)
}

pub fn sweep_with(family: &FamilySpec, samples: Option<usize>) -> Result<Vec<StabilityRecord>> {
    if family.amplitudes.len() < 4 {
        return Err(Error::Config(format!(
            "a sweep needs at least 4 amplitudes, got {}",
            family.amplitudes.len()
        )));
    }
    family
        .amplitudes
        .par_iter()
        .map(|&eps| {
            let wrap = |e: Error| Error::SweepMember {
                epsilon: eps,
                source: Box::new(e),
            };
            let domain = family.member(eps).map_err(wrap)?;
            let mut rec = evaluate_domain_with(&domain, family.level, samples).map_err(wrap)?;
            rec.epsilon = eps;
            Ok(rec)
        })
        .collect()
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub correlation: f64,
}

pub fn fit_exponent(records: &[StabilityRecord], x: Field, y: Field) -> Result<PowerFit> {
    if records.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 records, got {}", records.len())));
    }
    let mut pts = Vec::with_capacity(records.len());
    for r in records {
        let (xv, yv) = (x.get(r), y.get(r));
        for (f, v) in [(x, xv), (y, yv)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Fit(format!(
                    "record epsilon = {}: {} = {v:e} is not positive",
                    r.epsilon,
                    f.name()
                )));
            }
        }
        pts.push((xv.ln(), yv.ln()));
    }
    fit_log_points(&pts)
}

/// Least-squares line through points already in log space.
pub fn fit_log_points(pts: &[(f64, f64)]) -> Result<PowerFit> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let syy = pts.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>();
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    if !(sxx > 0.0) {
        return Err(Error::Fit("x values are all equal".into()));
    }
    let slope = sxy / sxx;
    let correlation = if syy > 0.0 { sxy / (sxx * syy).sqrt() } else { 1.0 };
    Ok(PowerFit {
        slope,
        intercept: my - slope * mx,
        correlation,
    })
}

/// One CSV row per record, columns [`COLUMNS`].
pub fn records_table(records: &[StabilityRecord]) -> Table {
    let mut t = Table::new(&COLUMNS);
    for r in records {
        let o = &r.oscillation;
        t.push(vec![
            r.epsilon.into(),
            r.level.into(),
            r.eta_sup_h.into(),
            r.eta_osc_h.into(),
            r.eta_plus_h.into(),
            r.eta_l2_h.into(),
            r.eta_l2_flux.into(),
            r.eta_l1_flux.into(),
            r.eta_lip_flux.into(),
            r.gap.into(),
            r.asym.into(),
            r.dual_norm.into(),
            r.dual_norm_closed.into(),
            r.feldman_ratio.map_or(Cell::from("ball"), Cell::from),
            o.oscillation.into(),
            o.lower_bound.into(),
            o.h_l2.into(),
            o.grad_h_l2.into(),
            o.weighted_hessian.into(),
        ]);
    }
    t
}

/// Fit summary rows: `x, y, slope, intercept, correlation`.
pub fn fits_table(records: &[StabilityRecord], pairs: &[(Field, Field)]) -> Result<Table> {
    let mut t = Table::new(&["x", "y", "slope", "intercept", "correlation"]);
    for &(x, y) in pairs {
        let f = fit_exponent(records, x, y)?;
        t.push(vec![
            x.name().into(),
            y.name().into(),
            f.slope.into(),
            f.intercept.into(),
            f.correlation.into(),
        ]);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synthetic(eps: f64, y: f64) -> StabilityRecord {
        StabilityRecord {
            epsilon: eps,
            level: 0,
            eta_sup_h: eps,
            eta_osc_h: eps,
            eta_plus_h: eps,
            eta_l2_h: eps,
            eta_l2_flux: eps,
            eta_l1_flux: eps,
            eta_lip_flux: eps,
            gap: y,
            asym: y,
            dual_norm: eps,
            dual_norm_closed: eps,
            feldman_ratio: None,
            oscillation: OscillationDiagnostics {
                oscillation: 0.0,
                lower_bound: 0.0,
                h_l2: 0.0,
                grad_h_l2: 0.0,
                weighted_hessian: 0.0,
            },
        }
    }

    #[test]
    fn fit_recovers_exact_power() {
        let recs: Vec<_> = [0.01, 0.02, 0.04, 0.08]
            .iter()
            .map(|&e| synthetic(e, 3.0 * e * e))
            .collect();
        let f = fit_exponent(&recs, Field::EtaL2H, Field::Gap).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 3.0f64.ln()).abs() < 1e-12);
        assert!((f.correlation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_non_positive_values() {
        let mut recs: Vec<_> = [0.01, 0.02, 0.04, 0.08].iter().map(|&e| synthetic(e, e)).collect();
        recs[2].gap = 0.0;
        let err = fit_exponent(&recs, Field::EtaL2H, Field::Gap).unwrap_err();
        assert!(err.to_string().contains("0.04"), "{err}");
    }

    #[test]
    fn circle_curvature_deviations_vanish() {
        let d = StarDomain::circle(1.5).unwrap();
        for v in curvature_deviations(&d, 128).unwrap() {
            assert!(v < 1e-12);
        }
    }

    #[test]
    fn field_names_round_trip() {
        for f in Field::ALL {
            assert_eq!(Field::parse(f.name()), Some(f));
        }
        assert_eq!(Field::parse("nope"), None);
    }

    proptest! {
        #[test]
        fn fit_slope_matches_generating_power(p in 0.2f64..3.0, c in 0.1f64..10.0) {
            let recs: Vec<_> = [0.005, 0.01, 0.02, 0.04, 0.08].iter().map(|&e| synthetic(e, c * e.powf(p))).collect();
            let f = fit_exponent(&recs, Field::Epsilon, Field::Asym).unwrap();
            prop_assert!((f.slope - p).abs() < 1e-9);
            prop_assert!(f.correlation > 0.999_999);
        }
    }
}
