mod common;

use eigshape::diagnostics::{boundary_growth_fit, extract_free_boundary, holder_fit, FreeBoundary};
use eigshape::mesh::ScalarField;

use common::square;

const CENTER: [f64; 2] = [1.0, 1.0];
const RADIUS: f64 = 0.5;

fn dist_outside_power(beta: f64) -> ScalarField {
    let m = square(2.0, 128);
    let mut u = ScalarField::from_fn(&m, |x| {
        let d = ((x[0] - CENTER[0]).powi(2) + (x[1] - CENTER[1]).powi(2)).sqrt() - RADIUS;
        d.max(0.0).powf(beta)
    });
    u.zero_trace();
    u
}

fn sphere_points() -> FreeBoundary {
    let points = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]
        .iter()
        .map(|(a, b)| vec![CENTER[0] + RADIUS * a, CENTER[1] + RADIUS * b])
        .collect();
    FreeBoundary {
        points,
        vertices: Vec::new(),
    }
}

#[test]
fn linear_and_sublinear_growth_at_sphere_points() {
    for (beta, tol) in [(1.0, 0.02), (0.7, 0.03)] {
        let u = dist_outside_power(beta);
        let fits = boundary_growth_fit(&u, &sphere_points(), 0.25, 3).unwrap();
        for f in &fits {
            assert!(f.is_reliable());
            assert!((f.exponent - beta).abs() <= tol, "beta {beta}: {f:?}");
        }
    }
}

#[test]
fn extracted_rim_is_biased_upward_by_its_offset() {
    let u = dist_outside_power(1.0);
    let rim = extract_free_boundary(&u, 1e-9).unwrap();
    let points: Vec<Vec<f64>> = rim
        .points
        .into_iter()
        .filter(|x| u.mesh().domain().distance_to_boundary(x) > 0.25)
        .collect();
    let fb = FreeBoundary {
        points,
        vertices: Vec::new(),
    };
    assert!(fb.points.len() > 100);
    let mut e: Vec<f64> = boundary_growth_fit(&u, &fb, 0.25, 3)
        .unwrap()
        .iter()
        .map(|f| f.exponent)
        .collect();
    e.sort_by(f64::total_cmp);
    let median = e[e.len() / 2];
    // Rim vertices sit up to one cell inside the sphere, so sup u ≈ r − d₀.
    assert!((1.0..1.2).contains(&median), "{median}");
}

#[test]
fn interior_power_exponents() {
    let m = square(2.0, 128);
    for beta in [0.5, 0.7, 1.0] {
        let u = ScalarField::from_fn(&m, |x| {
            ((x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2))
                .sqrt()
                .powf(beta)
        });
        let f = holder_fit(&u, &CENTER, 0.5, 4).unwrap();
        assert!((f.exponent - beta).abs() <= 0.02, "{beta}: {f:?}");
    }
}

#[test]
fn free_boundary_edge_cases() {
    let m = square(1.0, 8);
    let empty = ScalarField::zeros(&m);
    assert!(extract_free_boundary(&empty, 0.1)
        .unwrap()
        .points
        .is_empty());
    let mut full = ScalarField::from_fn(&m, |_| 1.0);
    full.zero_trace();
    let rim = extract_free_boundary(&full, 0.5).unwrap();
    assert!(rim.vertices.iter().all(|v| m.is_dirichlet(*v)));
    assert_eq!(rim.vertices.len(), 4 * 7);
}
