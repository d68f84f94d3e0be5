//! The penalized functional
//!
//! ```text
//! F(u) = ∫ ∇u·(A∇u) + (1/δ)|∫u² − m₀| + (1/ε)(|{u ≠ 0}| − V₀)₊
//! ```
//!
//! with the support measure replaced by a smeared indicator
//! `Σ_v w_v φ_s(u_v)` with `φ_s(t) = min(t/s, 1)`.

use serde::{Deserialize, Serialize};

use crate::assembly::{apply_mass, apply_operator, dirichlet_energy, mass};
use crate::coeff::CoeffField;
use crate::error::{Error, Result};
use crate::mesh::ScalarField;

/// `|mass − m₀|` below this counts as on the constraint; the mass term then
/// contributes no gradient (the optimizer keeps iterates there by projection).
pub const MASS_SIGN_TOL: f64 = 1e-12;

/// Smeared volumes within this of `V₀` count as on the kink of `(·)₊` and
/// take the inactive branch of the volume gradient.
pub const VOLUME_KINK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub delta: f64,
    pub epsilon: f64,
    pub smear_s: f64,
    pub target_volume: f64,
    pub target_mass: f64,
}

impl PenaltyParams {
    pub fn new(delta: f64, epsilon: f64, smear_s: f64) -> Result<Self> {
        let p = Self {
            delta,
            epsilon,
            smear_s,
            target_volume: 1.0,
            target_mass: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64); 5] = [
            ("delta", self.delta),
            ("epsilon", self.epsilon),
            ("smear_s", self.smear_s),
            ("target_volume", self.target_volume),
            ("target_mass", self.target_mass),
        ];
        for (name, x) in checks {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::param(
                    name,
                    format!("{x} must be positive and finite"),
                ));
            }
        }
        Ok(())
    }
}

/// How the support-measure term is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VolumeMode {
    /// `Σ w_v φ_s(u_v)` with `s = smear_s`.
    Smeared,
    /// `Σ w_v [u_v ≠ 0]`: the sharp support measure.
    Support,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValue {
    pub total: f64,
    pub dirichlet: f64,
    pub mass: f64,
    pub mass_penalty: f64,
    pub volume_penalty: f64,
    pub smeared_volume: f64,
    /// Vertex-weighted measure of `{u > s}`.
    pub exact_volume: f64,
}

#[inline]
fn phi(t: f64, s: f64) -> f64 {
    (t / s).min(1.0)
}

fn check_nonnegative(u: &ScalarField) -> Result<()> {
    match u.values().iter().position(|x| *x < 0.0 || x.is_nan()) {
        Some(v) => Err(Error::NegativeValue {
            vertex: v,
            value: u.values()[v],
        }),
        None => Ok(()),
    }
}

/// `Σ_v w_v min(u_v/s, 1)` for `u ≥ 0`.
pub fn smeared_volume(u: &ScalarField, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::param("smear_s", format!("{s} must be positive")));
    }
    check_nonnegative(u)?;
    Ok(u.values()
        .iter()
        .zip(u.mesh().vertex_weights())
        .map(|(x, w)| w * phi(*x, s))
        .sum())
}

/// Vertex-weighted measure of `{u > threshold}`.
pub fn exact_volume(u: &ScalarField, threshold: f64) -> f64 {
    u.values()
        .iter()
        .zip(u.mesh().vertex_weights())
        .filter(|(x, _)| **x > threshold)
        .map(|(_, w)| w)
        .sum()
}

/// Vertex-weighted measure of `{u ≠ 0}`.
pub fn support_volume(u: &ScalarField) -> f64 {
    u.values()
        .iter()
        .zip(u.mesh().vertex_weights())
        .filter(|(x, _)| **x != 0.0)
        .map(|(_, w)| w)
        .sum()
}

pub fn evaluate(u: &ScalarField, a: &CoeffField, p: &PenaltyParams) -> Result<FunctionalValue> {
    evaluate_with(u, a, p, VolumeMode::Smeared)
}

pub fn evaluate_with(
    u: &ScalarField,
    a: &CoeffField,
    p: &PenaltyParams,
    mode: VolumeMode,
) -> Result<FunctionalValue> {
    p.validate()?;
    let dirichlet = dirichlet_energy(u, a)?;
    let m = mass(u);
    let smeared = smeared_volume(u, p.smear_s)?;
    let volume = match mode {
        VolumeMode::Smeared => smeared,
        VolumeMode::Support => support_volume(u),
    };
    let mass_penalty = (m - p.target_mass).abs() / p.delta;
    let volume_penalty = (volume - p.target_volume).max(0.0) / p.epsilon;
    Ok(FunctionalValue {
        total: dirichlet + mass_penalty + volume_penalty,
        dirichlet,
        mass: m,
        mass_penalty,
        volume_penalty,
        smeared_volume: smeared,
        exact_volume: exact_volume(u, p.smear_s),
    })
}

/// Gradient of the smeared functional with respect to vertex values:
/// `2Ku + (2/δ) sign(mass − m₀) Mu + (1/ε)[V_s > V₀] φ_s'(u) w`.
///
/// `φ_s'` is taken one-sided at 0 (`1/s` on `[0, s)`), matching the
/// nonnegative cone the optimizer works in.
pub fn descent_direction(
    u: &ScalarField,
    a: &CoeffField,
    p: &PenaltyParams,
) -> Result<ScalarField> {
    p.validate()?;
    let ku = apply_operator(u, a)?;
    let m = mass(u);
    let smeared = smeared_volume(u, p.smear_s)?;
    let mut g: Vec<f64> = ku.values().iter().map(|x| 2.0 * x).collect();

    let diff = m - p.target_mass;
    if diff.abs() > MASS_SIGN_TOL {
        let coef = 2.0 * diff.signum() / p.delta;
        let mu = apply_mass(u);
        for (gi, mi) in g.iter_mut().zip(mu.values()) {
            *gi += coef * mi;
        }
    }
    if smeared > p.target_volume + VOLUME_KINK_TOL {
        let coef = 1.0 / (p.epsilon * p.smear_s);
        for ((gi, x), w) in g.iter_mut().zip(u.values()).zip(u.mesh().vertex_weights()) {
            if *x < p.smear_s {
                *gi += coef * w;
            }
        }
    }
    let mut out = u.with_values(g)?;
    out.zero_trace();
    Ok(out)
}
