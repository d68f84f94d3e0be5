mod common;

use eigshape::coeff::make_identity;
use eigshape::diagnostics::{rescale_field, verify_rescaling_identity, RescaleParams};
use eigshape::functional::{descent_direction, PenaltyParams, VolumeMode};
use eigshape::mesh::ScalarField;

use common::{directional_derivatives, gradient_case, rescale_case, square};

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..20 {
        let c = gradient_case(seed);
        let (fd, ana) = directional_derivatives(&c, 1e-6);
        let rel = (fd - ana).abs() / ana.abs();
        assert!(rel <= 1e-5, "seed {seed}: fd {fd} analytic {ana}");
    }
}

#[test]
fn volume_term_lands_on_the_smear_band() {
    let m = square(3.0, 12);
    let a = make_identity(&m, 1.0).unwrap();
    let mut u = ScalarField::from_fn(&m, |x| if x[0] < 1.5 { 0.05 } else { 1.0 });
    u.zero_trace();
    let mut p = PenaltyParams::new(1e-3, 0.5, 0.2).unwrap();
    p.target_volume = 0.1;
    let plain = descent_direction(
        &u,
        &a,
        &PenaltyParams {
            target_volume: 1e6,
            ..p
        },
    )
    .unwrap();
    let with = descent_direction(&u, &a, &p).unwrap();
    for v in 0..m.vertex_count() {
        let diff = with.values()[v] - plain.values()[v];
        let expected = if m.is_dirichlet(v) || u.values()[v] >= p.smear_s {
            0.0
        } else {
            m.vertex_weights()[v] / (p.epsilon * p.smear_s)
        };
        assert!(
            (diff - expected).abs() <= 1e-12 * expected.abs().max(1.0),
            "vertex {v}"
        );
    }
}

#[test]
fn rescaling_identity_on_random_fields() {
    for seed in 0..20 {
        let c = rescale_case(seed);
        let res = c.rescale.aligned_resolution(c.u.mesh());
        for mode in [VolumeMode::Support, VolumeMode::Smeared] {
            let check =
                verify_rescaling_identity(&c.u, &c.a, &c.penalty, &c.rescale, res, mode).unwrap();
            assert!(check.gap <= 1e-10, "seed {seed} {mode:?}: {check:?}");
        }
    }
}

#[test]
fn kappa_two_doubles_values() {
    let c = rescale_case(3);
    let p1 = RescaleParams {
        kappa: 1.0,
        xi: 0.0,
        ..c.rescale.clone()
    };
    let p2 = RescaleParams {
        kappa: 2.0,
        ..p1.clone()
    };
    let res = p1.aligned_resolution(c.u.mesh());
    let v1 = rescale_field(&c.u, &p1, res).unwrap();
    let v2 = rescale_field(&c.u, &p2, res).unwrap();
    for (a, b) in v1.values().iter().zip(v2.values()) {
        assert_eq!(2.0 * a, *b);
    }
}

#[test]
fn rescalings_compose() {
    let m = square(3.0, 40);
    let u = ScalarField::from_fn(&m, |x| {
        (x[0] * 1.3).sin() * (x[1] * 0.9).cos() + x[0] * x[1]
    });
    let x0 = [1.5, 1.5];
    let outer = RescaleParams::new(&x0, 1.0, 1.0, 0.0);
    let v = rescale_field(&u, &outer, 64).unwrap();
    let inner = RescaleParams::new(&[0.25, -0.25], 1.0, 0.5, 0.0);
    let vv = rescale_field(&v, &inner, 16).unwrap();
    let direct = RescaleParams::new(&[1.75, 1.25], 1.0, 0.5, 0.0);
    let w = rescale_field(&u, &direct, 16).unwrap();
    let err = vv
        .values()
        .iter()
        .zip(w.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 5e-3, "{err}");
}
