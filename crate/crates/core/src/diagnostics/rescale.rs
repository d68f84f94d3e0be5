//! Blow-ups `v(x) = κ u(x₀ + r x) − ξ` on the unit ball and the functional
//! they minimize.
//!
//! Balls are discrete: a cell belongs to `B_ρ(y)` when its center does. On
//! grid-aligned rescalings (`x₀` a vertex, `r` a multiple of `h`, rescaled
//! spacing `h/r`) the rescaled cells are exactly the images of original cells,
//! so both sides of the identity agree to roundoff.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{cell_energies, cell_masses, mass};
use crate::coeff::{make_identity, CoeffField};
use crate::error::{Error, Result};
use crate::functional::{support_volume, PenaltyParams, VolumeMode};
use crate::mesh::{BoxDomain, Mesh, ScalarField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleParams {
    pub x0: Vec<f64>,
    pub kappa: f64,
    pub r: f64,
    pub xi: f64,
}

impl RescaleParams {
    pub fn new(x0: &[f64], kappa: f64, r: f64, xi: f64) -> Self {
        Self {
            x0: x0.to_vec(),
            kappa,
            r,
            xi,
        }
    }

    fn validate(&self, mesh: &Mesh) -> Result<()> {
        if self.x0.len() != mesh.dim() {
            return Err(Error::param(
                "x0",
                format!("expected {} coordinates", mesh.dim()),
            ));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::param("kappa", "must be positive"));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::param("r", "must be positive"));
        }
        if !self.xi.is_finite() {
            return Err(Error::param("xi", "must be finite"));
        }
        if self.r >= mesh.domain().distance_to_boundary(&self.x0) {
            return Err(Error::BallOutsideBox {
                center: self.x0.clone(),
                radius: self.r,
            });
        }
        Ok(())
    }

    /// Rescaled-grid resolution that makes the blow-up grid aligned with `mesh`.
    pub fn aligned_resolution(&self, mesh: &Mesh) -> usize {
        (2.0 * self.r / mesh.h_min()).round().max(2.0) as usize
    }
}

/// `[-1, 1]^d` with `resolution` cells per axis.
pub fn unit_mesh(dim: usize, resolution: usize) -> Result<Arc<Mesh>> {
    Mesh::build(
        BoxDomain::new(&vec![2.0; dim], &vec![-1.0; dim])?,
        &vec![resolution; dim],
    )
}

/// Samples `v(x) = κ u(x₀ + r x) − ξ` on the unit-ball-circumscribing grid by
/// multilinear interpolation; `u` is extended by zero outside the box.
pub fn rescale_field(u: &ScalarField, p: &RescaleParams, resolution: usize) -> Result<ScalarField> {
    let mesh = u.mesh();
    p.validate(mesh)?;
    let unit = unit_mesh(mesh.dim(), resolution)?;
    let dim = mesh.dim();
    Ok(ScalarField::from_fn(&unit, |x| {
        let mut y = [0.0; crate::mesh::MAX_DIM];
        for i in 0..dim {
            y[i] = p.x0[i] + p.r * x[i];
        }
        p.kappa * u.interpolate(&y[..dim]) - p.xi
    }))
}

/// `A(x₀ + r·)` on the rescaled grid, sampled at cell centers.
pub fn rescale_coeff(a: &CoeffField, p: &RescaleParams, unit: &Arc<Mesh>) -> Result<CoeffField> {
    let mesh = a.mesh();
    let dim = mesh.dim();
    let matrices = (0..unit.cell_count())
        .map(|c| {
            let y = unit.cell_center(c);
            let x: Vec<f64> = (0..dim).map(|i| p.x0[i] + p.r * y[i]).collect();
            *a.cell(mesh.locate(&x).0)
        })
        .collect();
    CoeffField::new(unit, matrices, a.bounds())
}

/// Cells whose center lies in the closed ball.
pub fn cells_in_ball(mesh: &Mesh, center: &[f64], radius: f64) -> Vec<bool> {
    let dim = mesh.dim();
    let r2 = radius * radius;
    (0..mesh.cell_count())
        .map(|c| {
            let x = mesh.cell_center(c);
            (0..dim).map(|i| (x[i] - center[i]).powi(2)).sum::<f64>() <= r2
        })
        .collect()
}

/// Volume density of a vertex value in original units.
fn volume_density(t: f64, mode: VolumeMode, s: f64) -> f64 {
    match mode {
        VolumeMode::Support => {
            if t != 0.0 {
                1.0
            } else {
                0.0
            }
        }
        VolumeMode::Smeared => (t / s).clamp(0.0, 1.0),
    }
}

/// `Σ_{cells in set} Σ_corners |cell|/2^d · density(value)`.
fn cellwise_volume(
    mesh: &Mesh,
    values: &[f64],
    cells: &[bool],
    density: impl Fn(f64) -> f64,
) -> f64 {
    let k = mesh.corners_per_cell();
    let share = mesh.cell_volume() / k as f64;
    (0..mesh.cell_count())
        .filter(|c| cells[*c])
        .map(|c| {
            let verts = mesh.cell_vertices(c);
            verts[..k]
                .iter()
                .map(|v| share * density(values[*v]))
                .sum::<f64>()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledTerms {
    pub dirichlet: f64,
    pub mass_penalty: f64,
    pub volume_penalty: f64,
    pub total: f64,
    pub nu: f64,
    pub gamma: f64,
}

/// `F_{κ,ξ,r}(v)` evaluated on the rescaled grid, with `ν` and `γ` taken
/// from `u` outside the ball.
pub fn rescaled_functional(
    u: &ScalarField,
    a: &CoeffField,
    params: &PenaltyParams,
    p: &RescaleParams,
    resolution: usize,
    mode: VolumeMode,
) -> Result<RescaledTerms> {
    params.validate()?;
    let mesh = u.mesh();
    let d = mesh.dim() as i32;
    let v = rescale_field(u, p, resolution)?;
    let unit = Arc::clone(v.mesh());
    let a_res = rescale_coeff(a, p, &unit)?;

    let inside_unit = cells_in_ball(&unit, &vec![0.0; mesh.dim()], 1.0);
    let energies = cell_energies(&v, &a_res)?;
    let dirichlet: f64 = energies
        .iter()
        .zip(&inside_unit)
        .filter(|(_, i)| **i)
        .map(|(e, _)| e)
        .sum();
    let shifted = v.with_values(v.values().iter().map(|x| x + p.xi).collect())?;
    let mass_in: f64 = cell_masses(&shifted)
        .iter()
        .zip(&inside_unit)
        .filter(|(_, i)| **i)
        .map(|(m, _)| m)
        .sum();
    // {w ≠ −ξ} in original units: t = (w + ξ)/κ ≠ 0.
    let vol_in = cellwise_volume(&unit, shifted.values(), &inside_unit, |w| {
        volume_density(w / p.kappa, mode, params.smear_s)
    });

    let inside_orig = cells_in_ball(mesh, &p.x0, p.r);
    let outside: Vec<bool> = inside_orig.iter().map(|b| !b).collect();
    let mass_out: f64 = cell_masses(u)
        .iter()
        .zip(&outside)
        .filter(|(_, o)| **o)
        .map(|(m, _)| m)
        .sum();
    let vol_out = cellwise_volume(mesh, u.values(), &outside, |t| {
        volume_density(t, mode, params.smear_s)
    });
    let rd = p.r.powi(-d);
    let nu = p.kappa * p.kappa * rd * (params.target_mass - mass_out);
    let gamma = rd * (params.target_volume - vol_out);

    let r2 = p.r * p.r;
    let mass_penalty = r2 / params.delta * (mass_in - nu).abs();
    let volume_penalty = p.kappa * p.kappa * r2 / params.epsilon * (vol_in - gamma).max(0.0);
    Ok(RescaledTerms {
        dirichlet,
        mass_penalty,
        volume_penalty,
        total: dirichlet + mass_penalty + volume_penalty,
        nu,
        gamma,
    })
}

/// `κ² r^{2−d} [∫_{B_r(x₀)} ∇u·A∇u + (1/δ)|∫u² − m₀| + (1/ε)(V(u) − V₀)₊]`
/// computed on the original grid.
pub fn localized_functional(
    u: &ScalarField,
    a: &CoeffField,
    params: &PenaltyParams,
    p: &RescaleParams,
    mode: VolumeMode,
) -> Result<f64> {
    params.validate()?;
    let mesh = u.mesh();
    p.validate(mesh)?;
    let d = mesh.dim() as i32;
    let inside = cells_in_ball(mesh, &p.x0, p.r);
    let local_energy: f64 = cell_energies(u, a)?
        .iter()
        .zip(&inside)
        .filter(|(_, i)| **i)
        .map(|(e, _)| e)
        .sum();
    let volume = match mode {
        VolumeMode::Support => support_volume(u),
        VolumeMode::Smeared => crate::functional::smeared_volume(u, params.smear_s)?,
    };
    let terms = local_energy
        + (mass(u) - params.target_mass).abs() / params.delta
        + (volume - params.target_volume).max(0.0) / params.epsilon;
    Ok(p.kappa * p.kappa * p.r.powi(2 - d) * terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescalingCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs| / |rhs|`.
    pub gap: f64,
}

/// Compares the rescaled functional of the blow-up with the direct
/// re-expression of the original functional's terms.
pub fn verify_rescaling_identity(
    u: &ScalarField,
    a: &CoeffField,
    params: &PenaltyParams,
    p: &RescaleParams,
    resolution: usize,
    mode: VolumeMode,
) -> Result<RescalingCheck> {
    let lhs = rescaled_functional(u, a, params, p, resolution, mode)?.total;
    let rhs = localized_functional(u, a, params, p, mode)?;
    let gap = (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE);
    Ok(RescalingCheck { lhs, rhs, gap })
}

/// `∫_{B_{1/2}} |∇v|² / [(κ²+ξ²)r² + (1+r²)∫_{B_1} v²]`.
pub fn caccioppoli_ratio(u: &ScalarField, p: &RescaleParams, resolution: usize) -> Result<f64> {
    let v = rescale_field(u, p, resolution)?;
    let unit = Arc::clone(v.mesh());
    let origin = vec![0.0; unit.dim()];
    let half = cells_in_ball(&unit, &origin, 0.5);
    let whole = cells_in_ball(&unit, &origin, 1.0);
    let laplace = make_identity(&unit, 1.0)?;
    let numerator: f64 = cell_energies(&v, &laplace)?
        .iter()
        .zip(&half)
        .filter(|(_, i)| **i)
        .map(|(e, _)| e)
        .sum();
    let l2: f64 = cell_masses(&v)
        .iter()
        .zip(&whole)
        .filter(|(_, i)| **i)
        .map(|(m, _)| m)
        .sum();
    let r2 = p.r * p.r;
    let denominator = (p.kappa * p.kappa + p.xi * p.xi) * r2 + (1.0 + r2) * l2;
    if !(denominator > 0.0) {
        return Err(Error::Degenerate("zero Caccioppoli denominator".into()));
    }
    Ok(numerator / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::make_identity;

    fn mesh(n: usize) -> Arc<Mesh> {
        Mesh::build(BoxDomain::cube(2, 3.0).unwrap(), &[n, n]).unwrap()
    }

    #[test]
    fn aligned_identity_rescale_is_restriction() {
        let m = mesh(30);
        let u = ScalarField::from_fn(&m, |x| (x[0] * 1.3).sin() * (x[1] * 0.7).cos());
        let x0 = m.vertex_position(m.vertex_index(&[15, 12]));
        let p = RescaleParams::new(&x0[..2], 1.0, 0.4, 0.0);
        let res = p.aligned_resolution(&m);
        assert_eq!(res, 8);
        let v = rescale_field(&u, &p, res).unwrap();
        let unit = v.mesh();
        for w in 0..unit.vertex_count() {
            let idx = unit.vertex_multi_index(w);
            let orig = m.vertex_index(&[15 + idx[0] - 4, 12 + idx[1] - 4]);
            assert_eq!(v.values()[w], u.values()[orig]);
        }
        let p2 = RescaleParams::new(&x0[..2], 2.0, 0.4, 0.0);
        let v2 = rescale_field(&u, &p2, res).unwrap();
        for (a, b) in v2.values().iter().zip(v.values()) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn ball_escaping_box_rejected() {
        let m = mesh(12);
        let u = ScalarField::zeros(&m);
        let p = RescaleParams::new(&[0.2, 1.5], 1.0, 0.3, 0.0);
        assert!(matches!(
            rescale_field(&u, &p, 8),
            Err(Error::BallOutsideBox { .. })
        ));
        let bad = RescaleParams::new(&[1.5, 1.5], 1.0, 0.0, 0.0);
        assert!(rescale_field(&u, &bad, 8).is_err());
    }

    #[test]
    fn zero_field_ratio_is_zero() {
        let m = mesh(12);
        let u = ScalarField::zeros(&m);
        let p = RescaleParams::new(&[1.5, 1.5], 1.0, 0.5, 0.3);
        assert!(caccioppoli_ratio(&u, &p, 8).unwrap().abs() < 1e-14);
        let flat = RescaleParams::new(&[1.5, 1.5], 1.0, 0.5, 0.0);
        assert!(
            caccioppoli_ratio(&u, &flat, 8).is_err()
                || caccioppoli_ratio(&u, &flat, 8).unwrap() == 0.0
        );
    }

    #[test]
    fn aligned_identity_holds_to_roundoff() {
        let m = mesh(30);
        let a = make_identity(&m, 1.0).unwrap();
        let mut u = ScalarField::from_fn(&m, |x| {
            (x[0] * (3.0 - x[0]) * x[1] * (3.0 - x[1]) - 0.8).max(0.0)
        });
        u.zero_trace();
        let params = PenaltyParams::new(0.1, 0.2, 0.05).unwrap();
        let x0 = m.vertex_position(m.vertex_index(&[14, 16]));
        for (kappa, xi) in [(1.0, 0.0), (2.5, 0.0), (0.7, 0.3)] {
            let p = RescaleParams::new(&x0[..2], kappa, 0.6, xi);
            let res = p.aligned_resolution(&m);
            for mode in [VolumeMode::Support, VolumeMode::Smeared] {
                let check = verify_rescaling_identity(&u, &a, &params, &p, res, mode).unwrap();
                assert!(check.gap <= 1e-10, "{check:?}");
            }
        }
    }

    #[test]
    fn doubling_kappa_quadruples_volume_penalty() {
        let m = mesh(30);
        let a = make_identity(&m, 1.0).unwrap();
        let mut u = ScalarField::from_fn(&m, |x| x[0] * x[1]);
        u.zero_trace();
        let params = PenaltyParams::new(0.1, 0.2, 0.05).unwrap();
        let x0 = m.vertex_position(m.vertex_index(&[15, 15]));
        let t1 = rescaled_functional(
            &u,
            &a,
            &params,
            &RescaleParams::new(&x0[..2], 1.0, 0.5, 0.0),
            10,
            VolumeMode::Support,
        )
        .unwrap();
        let t2 = rescaled_functional(
            &u,
            &a,
            &params,
            &RescaleParams::new(&x0[..2], 2.0, 0.5, 0.0),
            10,
            VolumeMode::Support,
        )
        .unwrap();
        assert!(t1.volume_penalty > 0.0);
        assert!((t2.volume_penalty - 4.0 * t1.volume_penalty).abs() <= 1e-12 * t2.volume_penalty);
    }
}
