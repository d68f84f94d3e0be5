//! Geometry of extracted supports.

use serde::{Deserialize, Serialize};

use crate::mesh::{DomainMask, ScalarField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportShape {
    pub centroid: Vec<f64>,
    /// Radius of the ball with the support's measure.
    pub radius: f64,
    pub measure: f64,
    /// `|S Δ B| / |S|` against the equal-measure ball at the centroid.
    pub symmetric_difference: f64,
}

fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => 4.0 / 3.0 * std::f64::consts::PI,
    }
}

/// Compares the cells of `mask` (all corners active) with the best-fit ball.
/// Cells are counted by their centers.
pub fn support_shape(mask: &DomainMask) -> Option<SupportShape> {
    let mesh = mask.mesh();
    let dim = mesh.dim();
    let k = mesh.corners_per_cell();
    let inside: Vec<bool> = (0..mesh.cell_count())
        .map(|c| {
            mesh.cell_vertices(c)[..k]
                .iter()
                .all(|v| mask.is_active(*v))
        })
        .collect();
    let count = inside.iter().filter(|b| **b).count();
    if count == 0 {
        return None;
    }
    let mut centroid = vec![0.0; dim];
    for c in (0..mesh.cell_count()).filter(|c| inside[*c]) {
        let x = mesh.cell_center(c);
        for i in 0..dim {
            centroid[i] += x[i];
        }
    }
    centroid.iter_mut().for_each(|x| *x /= count as f64);
    let measure = count as f64 * mesh.cell_volume();
    let radius = (measure / unit_ball_volume(dim)).powf(1.0 / dim as f64);
    let mismatched = (0..mesh.cell_count())
        .filter(|c| {
            let x = mesh.cell_center(*c);
            let d2: f64 = (0..dim).map(|i| (x[i] - centroid[i]).powi(2)).sum();
            (d2 <= radius * radius) != inside[*c]
        })
        .count();
    Some(SupportShape {
        centroid,
        radius,
        measure,
        symmetric_difference: mismatched as f64 / count as f64,
    })
}

/// Measure of the cells that have corners on both sides of `threshold`.
pub fn boundary_layer_volume(u: &ScalarField, threshold: f64) -> f64 {
    let mesh = u.mesh();
    let k = mesh.corners_per_cell();
    let cut = (0..mesh.cell_count())
        .filter(|c| {
            let verts = &mesh.cell_vertices(*c)[..k];
            let above = verts.iter().filter(|v| u.values()[**v] > threshold).count();
            above > 0 && above < k
        })
        .count();
    cut as f64 * mesh.cell_volume()
}
