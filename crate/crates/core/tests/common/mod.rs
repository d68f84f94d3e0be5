//! Seeded generators shared by the integration and acceptance suites.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eigshape::assembly::mass;
use eigshape::coeff::{
    make_checkerboard, make_identity, make_random_piecewise, CoeffField, Ellipticity, SymMatrix,
};
use eigshape::diagnostics::RescaleParams;
use eigshape::functional::PenaltyParams;
use eigshape::mesh::{BoxDomain, DomainMask, Mesh, ScalarField};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn square(side: f64, n: usize) -> Arc<Mesh> {
    Mesh::build(BoxDomain::cube(2, side).unwrap(), &[n, n]).unwrap()
}

/// Identity, a 1/10 checkerboard and a random field, picked by `kind % 3`.
pub fn coefficient(m: &Arc<Mesh>, kind: u64, seed: u64) -> CoeffField {
    let bounds = Ellipticity::new(1.0, 10.0).unwrap();
    let block = (m.cells_per_axis()[0] / 8).max(1);
    match kind % 3 {
        0 => make_identity(m, 1.0).unwrap(),
        1 => make_checkerboard(
            m,
            block,
            SymMatrix::scaled_identity(m.dim(), 1.0),
            SymMatrix::scaled_identity(m.dim(), 10.0),
            bounds,
        )
        .unwrap(),
        _ => make_random_piecewise(m, seed, bounds, block).unwrap(),
    }
}

/// Random vertex mask with roughly `density` active vertices; the central
/// vertex is always active so the mask is never empty.
pub fn random_mask(m: &Arc<Mesh>, density: f64, rng: &mut ChaCha8Rng) -> DomainMask {
    let mut active: Vec<bool> = (0..m.vertex_count())
        .map(|_| rng.random_bool(density))
        .collect();
    let mid: Vec<usize> = m.cells_per_axis().iter().map(|n| n / 2).collect();
    active[m.vertex_index(&mid)] = true;
    DomainMask::new(m, active).unwrap()
}

/// `outer = inner ∪ extra` for a random `extra`.
pub fn nested_pair(m: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> (DomainMask, DomainMask) {
    let inner = random_mask(m, 0.5, rng);
    let outer_bits: Vec<bool> = inner
        .active()
        .iter()
        .map(|a| *a || rng.random_bool(0.3))
        .collect();
    (inner, DomainMask::new(m, outer_bits).unwrap())
}

pub struct GradientCase {
    pub u: ScalarField,
    pub a: CoeffField,
    pub p: PenaltyParams,
    pub w: ScalarField,
}

/// A strictly positive interior state with every value at least `margin`
/// away from the smear width, mass away from 1, and a random zero-trace
/// direction. Both volume-active and volume-inactive states occur.
pub fn gradient_case(seed: u64) -> GradientCase {
    let margin = 0.02;
    let mut r = rng(seed);
    let m = square(3.0, 16);
    let a = coefficient(&m, seed, seed + 100);
    let s = 0.4;
    let mut u = ScalarField::from_values(
        &m,
        (0..m.vertex_count())
            .map(|_| r.random_range(0.02..1.0))
            .collect(),
    )
    .unwrap();
    u.zero_trace();
    let target_mass = if r.random_bool(0.5) {
        r.random_range(0.5..0.9)
    } else {
        r.random_range(1.1..2.0)
    };
    let k = (target_mass / mass(&u)).sqrt();
    let flags = m.dirichlet_flags().to_vec();
    for (x, bnd) in u.values_mut().iter_mut().zip(&flags) {
        if *bnd {
            continue;
        }
        *x *= k;
        if (*x - s).abs() < margin {
            *x = if *x < s { s - margin } else { s + margin };
        }
        if *x < margin {
            *x = margin;
        }
    }
    assert!((mass(&u) - 1.0).abs() > 0.05);
    let mut p = PenaltyParams::new(1e-2, 0.1, s).unwrap();
    p.target_volume = if r.random_bool(0.5) { 0.5 } else { 50.0 };
    let mut w = ScalarField::from_values(
        &m,
        (0..m.vertex_count())
            .map(|_| r.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    w.zero_trace();
    GradientCase { u, a, p, w }
}

pub struct RescaleCase {
    pub u: ScalarField,
    pub a: CoeffField,
    pub penalty: PenaltyParams,
    pub rescale: RescaleParams,
}

/// Random nonnegative field with scattered zeros, random coefficients and a
/// grid-aligned blow-up (vertex center, radius a multiple of the cell width).
pub fn rescale_case(seed: u64) -> RescaleCase {
    let mut r = rng(seed);
    let n = 30;
    let m = square(3.0, n);
    let a = coefficient(&m, seed, seed + 200);
    let values = (0..m.vertex_count())
        .map(|_| {
            if r.random_bool(0.3) {
                0.0
            } else {
                r.random_range(0.0..1.0)
            }
        })
        .collect();
    let mut u = ScalarField::from_values(&m, values).unwrap();
    u.zero_trace();
    let cells = r.random_range(3..=8usize);
    let radius = cells as f64 * m.h_min();
    let i = r.random_range(cells + 1..n - cells);
    let j = r.random_range(cells + 1..n - cells);
    let x0 = m.vertex_position(m.vertex_index(&[i, j]));
    let kappa = r.random_range(0.5..3.0);
    let xi = if r.random_bool(0.5) {
        0.0
    } else {
        r.random_range(0.0..0.5)
    };
    let mut penalty = PenaltyParams::new(
        r.random_range(0.01..1.0),
        r.random_range(0.01..1.0),
        r.random_range(0.05..0.5),
    )
    .unwrap();
    penalty.target_volume = r.random_range(0.01..0.5);
    RescaleCase {
        u,
        a,
        penalty,
        rescale: RescaleParams::new(&x0[..2], kappa, radius, xi),
    }
}

/// `(fd, analytic)` directional derivatives of the total along `w`.
pub fn directional_derivatives(c: &GradientCase, t: f64) -> (f64, f64) {
    use eigshape::functional::{descent_direction, evaluate};
    let shift = |sign: f64| {
        c.u.with_values(
            c.u.values()
                .iter()
                .zip(c.w.values())
                .map(|(x, d)| x + sign * t * d)
                .collect(),
        )
        .unwrap()
    };
    let fp = evaluate(&shift(1.0), &c.a, &c.p).unwrap().total;
    let fm = evaluate(&shift(-1.0), &c.a, &c.p).unwrap().total;
    let g = descent_direction(&c.u, &c.a, &c.p).unwrap();
    let ana: f64 = g
        .values()
        .iter()
        .zip(c.w.values())
        .map(|(a, b)| a * b)
        .sum();
    ((fp - fm) / (2.0 * t), ana)
}
