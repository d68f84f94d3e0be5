//! Minimizer versus eigenfunction on the extracted support.

use serde::{Deserialize, Serialize};

use crate::coeff::CoeffField;
use crate::eigensolver::lambda1;
use crate::error::Result;
use crate::functional::{evaluate, PenaltyParams};
use crate::mesh::{DomainMask, ScalarField};
use crate::optimizer::project;

/// Eigensolver tolerance used for the comparison.
pub const EQUIVALENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceCheck {
    /// `F` of the minimizer restricted to the mask and renormalized.
    pub f_min: f64,
    /// `F` of the unit-mass first eigenfunction of the mask.
    pub f_eig: f64,
    /// `(f_min − f_eig) / |f_min|`.
    pub gap: f64,
    /// `F` of the unrestricted minimizer.
    pub f_min_raw: f64,
    pub lambda1: f64,
    pub mask_measure: f64,
    pub threshold: f64,
}

/// Extracts the mask `{u > s}`, restricts the minimizer to it and compares
/// its functional value with that of the mask's first eigenfunction.
///
/// The restriction lies in the mask's function space and saturates the
/// smear on every active vertex, so `f_eig ≤ f_min` up to solver tolerance.
pub fn equivalence_check(
    u: &ScalarField,
    a: &CoeffField,
    params: &PenaltyParams,
) -> Result<EquivalenceCheck> {
    let threshold = params.smear_s;
    let mask = DomainMask::from_field(u, threshold);
    let restricted = u.with_values(
        u.values()
            .iter()
            .zip(mask.active())
            .map(|(x, on)| if *on { *x } else { 0.0 })
            .collect(),
    )?;
    let restricted = project(&restricted)?;
    let eig = lambda1(&mask, a, EQUIVALENCE_TOL)?;
    let f_min = evaluate(&restricted, a, params)?.total;
    let f_eig = evaluate(&eig.eigenfunction, a, params)?.total;
    Ok(EquivalenceCheck {
        f_min,
        f_eig,
        gap: (f_min - f_eig) / f_min.abs().max(f64::MIN_POSITIVE),
        f_min_raw: evaluate(u, a, params)?.total,
        lambda1: eig.lambda1,
        mask_measure: mask.measure(),
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::make_identity;
    use crate::mesh::{BoxDomain, Mesh};
    use crate::optimizer::initial_state;

    #[test]
    fn eigenfunction_never_loses_to_a_bump() {
        let mesh = Mesh::build(BoxDomain::cube(2, 3.0).unwrap(), &[32, 32]).unwrap();
        let a = make_identity(&mesh, 1.0).unwrap();
        let u = initial_state(&mesh, 0.9).unwrap();
        let p = PenaltyParams::new(1e-3, 0.02, 0.25 * u.max()).unwrap();
        let c = equivalence_check(&u, &a, &p).unwrap();
        assert!(c.f_eig <= c.f_min + EQUIVALENCE_TOL);
        assert!(c.gap >= -EQUIVALENCE_TOL);
        assert!(c.mask_measure > 0.0 && c.mask_measure < 0.9);
        assert!(c.f_eig >= c.lambda1 * (1.0 - 1e-8));
    }

    #[test]
    fn empty_mask_is_an_error() {
        let mesh = Mesh::build(BoxDomain::cube(2, 3.0).unwrap(), &[16, 16]).unwrap();
        let a = make_identity(&mesh, 1.0).unwrap();
        let u = initial_state(&mesh, 0.9).unwrap();
        let p = PenaltyParams::new(1e-3, 0.02, 2.0 * u.max()).unwrap();
        assert!(equivalence_check(&u, &a, &p).is_err());
    }
}
