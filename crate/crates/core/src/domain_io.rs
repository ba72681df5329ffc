//! JSON descriptions of domains and perturbation families, and seeded
//! random test domains.
//!
//! Domain file:
//!
//! ```json
//! {"kind": "fourier", "c0": 1.0, "cos": [0.0, 0.0, 0.1], "sin": []}
//! {"kind": "ellipse", "a": 2.0, "b": 1.0}
//! {"kind": "circle", "radius": 1.0}
//! ```
//!
//! Every kind also accepts `"center": [x, y]` and `"rotation"` (radians).
//! Coefficient `k` of `cos`/`sin` multiplies `cos kθ`/`sin kθ`, starting at
//! `k = 1`.
//!
//! Family file:
//!
//! ```json
//! {"base": {"kind": "circle", "radius": 1.0},
//!  "cos": [0.0, 0.0, 1.0], "sin": [],
//!  "amplitudes": [0.005, 0.01, 0.02, 0.04, 0.08], "level": 5}
//! ```
//!
//! `amplitudes` defaults to `0.08 * 2^-j`, `j = 0..4`, and `level` to 5.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geometry::{Shape, StarDomain};
use crate::real::Real;

/// Default sweep amplitudes `0.08 * 2^-j`, ascending.
pub fn default_amplitudes() -> Vec<f64> {
    (0..5).rev().map(|j| 0.08 * 0.5f64.powi(j)).collect()
}

pub const DEFAULT_FAMILY_LEVEL: usize = 5;

/// A base domain with a trigonometric perturbation direction.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    pub base: StarDomain<f64>,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    /// Ascending, positive.
    pub amplitudes: Vec<f64>,
    pub level: usize,
}

fn field_err(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::DomainFile {
        field: field.into(),
        reason: reason.into(),
    }
}

fn number(obj: &Map<String, Value>, prefix: &str, key: &str) -> Result<Option<f64>> {
    match obj.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .map(Some)
            .ok_or_else(|| field_err(format!("{prefix}{key}"), format!("expected a finite number, got {v}"))),
    }
}

fn required(obj: &Map<String, Value>, prefix: &str, key: &str) -> Result<f64> {
    number(obj, prefix, key)?.ok_or_else(|| field_err(format!("{prefix}{key}"), "missing"))
}

fn numbers(obj: &Map<String, Value>, prefix: &str, key: &str) -> Result<Vec<f64>> {
    match obj.get(key) {
        None => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                    field_err(
                        format!("{prefix}{key}[{i}]"),
                        format!("expected a finite number, got {v}"),
                    )
                })
            })
            .collect(),
        Some(v) => Err(field_err(
            format!("{prefix}{key}"),
            format!("expected an array, got {v}"),
        )),
    }
}

fn object<'a>(v: &'a Value, field: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| field_err(if field.is_empty() { "<root>" } else { field }, "expected an object"))
}

fn domain_from_value(v: &Value, prefix: &str) -> Result<StarDomain<f64>> {
    let obj = object(v, prefix.trim_end_matches('.'))?;
    let kind = match obj.get("kind") {
        Some(Value::String(s)) => s.as_str(),
        Some(other) => {
            return Err(field_err(
                format!("{prefix}kind"),
                format!("expected a string, got {other}"),
            ))
        }
        None => return Err(field_err(format!("{prefix}kind"), "missing")),
    };
    let wrap = |field: &str, e: Error| match e {
        Error::DomainFile { .. } => e,
        other => field_err(format!("{prefix}{field}"), other.to_string()),
    };
    let domain = match kind {
        "fourier" => {
            let c0 = required(obj, prefix, "c0")?;
            let cos = numbers(obj, prefix, "cos")?;
            let sin = numbers(obj, prefix, "sin")?;
            StarDomain::fourier(c0, cos, sin).map_err(|e| wrap("c0", e))?
        }
        "ellipse" => {
            let a = required(obj, prefix, "a")?;
            let b = required(obj, prefix, "b")?;
            StarDomain::ellipse(a, b).map_err(|e| wrap("a", e))?
        }
        "circle" => {
            let r = required(obj, prefix, "radius")?;
            if !(r > 0.0) {
                return Err(field_err(
                    format!("{prefix}radius"),
                    format!("must be positive, got {r}"),
                ));
            }
            StarDomain::circle(r).map_err(|e| wrap("radius", e))?
        }
        other => {
            return Err(field_err(
                format!("{prefix}kind"),
                format!("unknown kind `{other}` (expected fourier, ellipse or circle)"),
            ))
        }
    };
    let center = numbers(obj, prefix, "center")?;
    let domain = match center.len() {
        0 => domain,
        2 => domain.translated([center[0], center[1]]),
        n => {
            return Err(field_err(
                format!("{prefix}center"),
                format!("expected 2 numbers, got {n}"),
            ))
        }
    };
    Ok(match number(obj, prefix, "rotation")? {
        Some(a) => domain.rotated(a),
        None => domain,
    })
}

pub fn parse_domain(text: &str) -> Result<StarDomain<f64>> {
    let v: Value = serde_json::from_str(text).map_err(|e| field_err("<root>", e.to_string()))?;
    domain_from_value(&v, "")
}

pub fn read_domain(path: &Path) -> Result<StarDomain<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_domain(&text)
}

/// JSON value describing `domain` in the file format above.
pub fn domain_to_value<T: Real>(domain: &StarDomain<T>) -> Value {
    let f = |v: T| v.as_f64();
    let mut v = match domain.shape() {
        Shape::Fourier { c0, cos, sin } => json!({
            "kind": "fourier",
            "c0": f(*c0),
            "cos": cos.iter().map(|x| f(*x)).collect::<Vec<_>>(),
            "sin": sin.iter().map(|x| f(*x)).collect::<Vec<_>>(),
        }),
        Shape::Ellipse { a, b } => json!({"kind": "ellipse", "a": f(*a), "b": f(*b)}),
    };
    let c = domain.center();
    if c[0] != T::zero() || c[1] != T::zero() {
        v["center"] = json!([f(c[0]), f(c[1])]);
    }
    if domain.rotation() != T::zero() {
        v["rotation"] = json!(f(domain.rotation()));
    }
    v
}

pub fn parse_family(text: &str) -> Result<FamilySpec> {
    let v: Value = serde_json::from_str(text).map_err(|e| field_err("<root>", e.to_string()))?;
    let obj = object(&v, "")?;
    let base = domain_from_value(obj.get("base").ok_or_else(|| field_err("base", "missing"))?, "base.")?;
    let cos = numbers(obj, "", "cos")?;
    let sin = numbers(obj, "", "sin")?;
    if cos.iter().chain(&sin).all(|c| *c == 0.0) {
        return Err(field_err("cos", "perturbation direction is zero"));
    }
    let amplitudes = if obj.contains_key("amplitudes") {
        numbers(obj, "", "amplitudes")?
    } else {
        default_amplitudes()
    };
    if amplitudes.len() < 4 {
        return Err(field_err(
            "amplitudes",
            format!("need at least 4 amplitudes, got {}", amplitudes.len()),
        ));
    }
    if let Some(i) = amplitudes.iter().position(|a| !(*a > 0.0)) {
        return Err(field_err(format!("amplitudes[{i}]"), "must be positive"));
    }
    if amplitudes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(field_err("amplitudes", "must be strictly ascending"));
    }
    let level = match obj.get("level") {
        None => DEFAULT_FAMILY_LEVEL,
        Some(l) => l
            .as_u64()
            .map(|l| l as usize)
            .ok_or_else(|| field_err("level", format!("expected a non-negative integer, got {l}")))?,
    };
    let family = FamilySpec {
        base,
        cos,
        sin,
        amplitudes,
        level,
    };
    for &eps in &family.amplitudes {
        family
            .member(eps)
            .map_err(|e| field_err("amplitudes", format!("member at {eps}: {e}")))?;
    }
    Ok(family)
}

pub fn read_family(path: &Path) -> Result<FamilySpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_family(&text)
}

impl FamilySpec {
    /// The family member at amplitude `eps`.
    pub fn member(&self, eps: f64) -> Result<StarDomain<f64>> {
        self.base.perturbed(&self.cos, &self.sin, eps)
    }
}

/// Random smooth series domain about the origin, reproducible from `seed`:
/// `c0 = 1` and coefficients uniform in `±amplitude / k²` for
/// `k = 1..=modes`. For `amplitude < 6/π²` the radius stays positive.
pub fn random_domain(seed: u64, modes: usize, amplitude: f64) -> Result<StarDomain<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |k: usize| amplitude * rng.gen_range(-1.0..=1.0) / (k * k) as f64;
    let mut cos = Vec::with_capacity(modes);
    let mut sin = Vec::with_capacity(modes);
    for k in 1..=modes {
        cos.push(draw(k));
        sin.push(draw(k));
    }
    StarDomain::fourier(1.0, cos, sin)
}
