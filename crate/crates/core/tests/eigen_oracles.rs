use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use eigshape::coeff::{
    make_checkerboard, make_identity, make_random_piecewise, validate_ellipticity, CoeffField,
    Ellipticity, SymMatrix,
};
use eigshape::eigensolver::{dense_oracle, inflate_to_volume, lambda1, monotonicity_check};
use eigshape::mesh::{ball_indicator, BoxDomain, DomainMask, Mesh};

const J01: f64 = 2.404_825_557_695_773;

fn square(side: f64, n: usize) -> Arc<Mesh> {
    Mesh::build(BoxDomain::cube(2, side).unwrap(), &[n, n]).unwrap()
}

fn coefficient_fields(m: &Arc<Mesh>, seed: u64) -> Vec<CoeffField> {
    let bounds = Ellipticity::new(1.0, 10.0).unwrap();
    vec![
        make_identity(m, 1.0).unwrap(),
        make_checkerboard(
            m,
            2,
            SymMatrix::scaled_identity(2, 1.0),
            SymMatrix::scaled_identity(2, 10.0),
            bounds,
        )
        .unwrap(),
        make_random_piecewise(m, seed, bounds, 2).unwrap(),
    ]
}

fn mask_from_bits(m: &Arc<Mesh>, bits: &[bool]) -> DomainMask {
    let mut active = bits.to_vec();
    let center = m.vertex_index(&[m.cells_per_axis()[0] / 2, m.cells_per_axis()[1] / 2]);
    active[center] = true;
    DomainMask::new(m, active).unwrap()
}

#[test]
fn unit_square_converges_to_two_pi_squared() {
    let exact = 2.0 * PI * PI;
    let m = square(1.0, 128);
    let a = make_identity(&m, 1.0).unwrap();
    let full = DomainMask::new(&m, vec![true; m.vertex_count()]).unwrap();
    let l = lambda1(&full, &a, 1e-10).unwrap().lambda1;
    assert!((l - exact).abs() / exact < 5e-3, "{l}");

    let m16 = square(1.0, 16);
    let a16 = make_identity(&m16, 1.0).unwrap();
    let full16 = DomainMask::new(&m16, vec![true; m16.vertex_count()]).unwrap();
    let it = lambda1(&full16, &a16, 1e-12).unwrap().lambda1;
    let dense = dense_oracle(&full16, &a16).unwrap().lambda1;
    assert!((it - dense).abs() / dense < 1e-8);
    assert!(dense > exact && (dense - exact) / exact < 0.02);
}

#[test]
fn discrete_faber_krahn_ball_matches_bessel_value() {
    let m = square(3.0, 64);
    let a = make_identity(&m, 1.0).unwrap();
    let r = 1.0 / PI.sqrt();
    let mask = DomainMask::from_field(&ball_indicator(&m, &[1.5, 1.5], r).unwrap(), 0.5);
    let dense = dense_oracle(&mask, &a).unwrap().lambda1;
    let it = lambda1(&mask, &a, 1e-12).unwrap().lambda1;
    let exact = PI * J01 * J01;
    assert!((it - dense).abs() / dense < 1e-8);
    assert!((dense - exact).abs() / exact < 0.10, "{dense} vs {exact}");
}

#[test]
fn scaling_the_operator_scales_lambda() {
    let m = square(3.0, 32);
    let mask = DomainMask::from_field(&ball_indicator(&m, &[1.5, 1.5], 0.7).unwrap(), 0.5);
    let l1 = lambda1(&mask, &make_identity(&m, 1.0).unwrap(), 1e-12)
        .unwrap()
        .lambda1;
    let l3 = lambda1(&mask, &make_identity(&m, 3.0).unwrap(), 1e-12)
        .unwrap()
        .lambda1;
    assert!((l3 - 3.0 * l1).abs() / l3 < 1e-9);
}

#[test]
fn symmetric_problem_has_symmetric_eigenfunction() {
    let m = square(3.0, 14);
    let a = make_checkerboard(
        &m,
        7,
        SymMatrix::scaled_identity(2, 1.0),
        SymMatrix::scaled_identity(2, 4.0),
        Ellipticity::new(1.0, 4.0).unwrap(),
    )
    .unwrap();
    let full = DomainMask::new(&m, vec![true; m.vertex_count()]).unwrap();
    let e = dense_oracle(&full, &a).unwrap();
    let n = 14;
    for i in 0..=n {
        for j in 0..=n {
            let x = e.eigenfunction.values()[m.vertex_index(&[i, j])];
            let y = e.eigenfunction.values()[m.vertex_index(&[j, i])];
            assert!((x - y).abs() < 1e-8);
        }
    }
}

#[test]
fn concentric_balls_are_strictly_ordered() {
    let m = square(3.0, 48);
    let a = make_identity(&m, 1.0).unwrap();
    let small = DomainMask::from_field(&ball_indicator(&m, &[1.5, 1.5], 0.3).unwrap(), 0.5);
    let big = DomainMask::from_field(&ball_indicator(&m, &[1.5, 1.5], 0.5).unwrap(), 0.5);
    let ls = lambda1(&small, &a, 1e-10).unwrap().lambda1;
    let lb = lambda1(&big, &a, 1e-10).unwrap().lambda1;
    assert!(ls > lb);
    assert!(monotonicity_check(&small, &big, &a, 1e-10, 1e-10).unwrap());
    assert!(monotonicity_check(&big, &big, &a, 1e-10, 1e-10).unwrap());
    assert!(monotonicity_check(&big, &small, &a, 1e-10, 1e-10).is_err());
}

#[test]
fn inflation_never_raises_lambda() {
    let m = square(3.0, 48);
    let a = make_identity(&m, 1.0).unwrap();
    let mask = DomainMask::from_field(&ball_indicator(&m, &[1.4, 1.6], 0.45).unwrap(), 0.5);
    let grown = inflate_to_volume(&mask, 1.0).unwrap();
    assert!(grown.measure() >= 1.0);
    assert!(grown.contains(&mask).is_ok());
    let before = lambda1(&mask, &a, 1e-10).unwrap().lambda1;
    let after = lambda1(&grown, &a, 1e-10).unwrap().lambda1;
    assert!(after <= before);
    let same = inflate_to_volume(&grown, grown.measure()).unwrap();
    assert_eq!(same.active(), grown.active());
}

#[test]
fn random_coefficients_respect_declared_bounds() {
    let m = square(3.0, 12);
    let bounds = Ellipticity::new(0.5, 7.0).unwrap();
    for seed in 0..10 {
        let a = make_random_piecewise(&m, seed, bounds, 3).unwrap();
        for mat in a.matrices() {
            let n =
                nalgebra::Matrix2::new(mat.get(0, 0), mat.get(0, 1), mat.get(1, 0), mat.get(1, 1));
            for ev in n.symmetric_eigen().eigenvalues.iter() {
                assert!(*ev >= 0.5 - 1e-12 && *ev <= 7.0 + 1e-12, "{ev}");
            }
        }
        let rep = validate_ellipticity(&a).unwrap();
        assert!(rep.theta_observed >= 0.5 - 1e-12 && rep.big_theta_observed <= 7.0 + 1e-12);
    }
}

#[test]
fn ball_measure_converges_first_order() {
    let r: f64 = 0.8;
    let exact = PI * r * r;
    let err = |n: usize| {
        let m = square(3.0, n);
        let mask = DomainMask::from_field(&ball_indicator(&m, &[1.5, 1.5], r).unwrap(), 0.5);
        (mask.measure() - exact).abs()
    };
    let (coarse, fine) = (err(32), err(128));
    let h = 3.0 / 32.0;
    assert!(coarse < 2.0 * PI * r * 2.0 * h);
    assert!(fine < coarse);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn iterative_matches_dense_on_random_masks(
        n in 4usize..=16,
        bits in prop::collection::vec(prop::bool::weighted(0.7), 17 * 17),
        seed in 0u64..1000,
    ) {
        let m = square(1.0, n);
        let mask = mask_from_bits(&m, &bits[..m.vertex_count()]);
        let a = &coefficient_fields(&m, seed)[(seed % 3) as usize];
        let it = lambda1(&mask, a, 1e-12).unwrap().lambda1;
        let dense = dense_oracle(&mask, a).unwrap().lambda1;
        prop_assert!((it - dense).abs() <= 1e-8 * dense, "{} vs {}", it, dense);
    }

    #[test]
    fn nested_masks_are_monotone(
        inner_bits in prop::collection::vec(prop::bool::weighted(0.5), 17 * 17),
        extra_bits in prop::collection::vec(prop::bool::weighted(0.3), 17 * 17),
        seed in 0u64..1000,
    ) {
        let m = square(1.0, 16);
        let inner = mask_from_bits(&m, &inner_bits);
        let outer_bits: Vec<bool> = inner.active().iter().zip(&extra_bits).map(|(a, b)| *a || *b).collect();
        let outer = mask_from_bits(&m, &outer_bits);
        for a in coefficient_fields(&m, seed) {
            prop_assert!(monotonicity_check(&inner, &outer, &a, 1e-12, 1e-10).unwrap());
        }
    }
}
