//! Oscillation-decay fits for interior Hölder exponents and free-boundary
//! growth rates.
//!
//! Moduli are sampled on dyadic radii `r_k = r_max 2^{-k}` and a line is
//! fitted to `(log r_k, log modulus_k)` by least squares. A Hölder exponent
//! cannot exceed 1 for a nonconstant function, so [`holder_fit`] reports the
//! slope capped at 1 in `exponent` and the uncapped slope in `raw_exponent`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, ScalarField};

/// The smallest ball must span at least this many cells across.
pub const MIN_CELLS_ACROSS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityFit {
    pub center: Vec<f64>,
    /// Strictly decreasing.
    pub radii: Vec<f64>,
    /// Sup-norm modulus at each radius.
    pub moduli: Vec<f64>,
    /// Root-mean-square deviation from the ball mean at each radius.
    pub l2_moduli: Vec<f64>,
    pub exponent: f64,
    pub raw_exponent: f64,
    pub prefactor: f64,
    pub r2: f64,
    /// Some modulus vanished, so no power law was fitted.
    pub degenerate: bool,
}

impl RegularityFit {
    /// Counts toward acceptance statistics: nondegenerate with `r2 ≥ 0.9`.
    pub fn is_reliable(&self) -> bool {
        !self.degenerate && self.r2 >= 0.9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundary {
    pub points: Vec<Vec<f64>>,
    pub vertices: Vec<usize>,
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).min(1.0)
    } else {
        1.0
    };
    (slope, intercept, r2)
}

fn dyadic_radii(mesh: &Mesh, r_max: f64, levels: usize) -> Result<Vec<f64>> {
    if levels < 3 {
        return Err(Error::param(
            "levels",
            "at least 3 radii are needed for a fit",
        ));
    }
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::param("r_max", "must be positive"));
    }
    let radii: Vec<f64> = (0..levels).map(|k| r_max * 0.5f64.powi(k as i32)).collect();
    let smallest = radii[levels - 1];
    if 2.0 * smallest < MIN_CELLS_ACROSS * mesh.h_min() * (1.0 - 1e-12) {
        return Err(Error::InsufficientResolution(format!(
            "ball of radius {smallest} spans fewer than {MIN_CELLS_ACROSS} cells of width {}",
            mesh.h_min()
        )));
    }
    Ok(radii)
}

fn fit(
    center: &[f64],
    radii: Vec<f64>,
    moduli: Vec<f64>,
    l2_moduli: Vec<f64>,
    cap: bool,
) -> RegularityFit {
    let degenerate = moduli.iter().any(|m| !(*m > 0.0));
    let (raw, prefactor, r2) = if degenerate {
        (0.0, 0.0, 0.0)
    } else {
        let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let ly: Vec<f64> = moduli.iter().map(|m| m.ln()).collect();
        let (slope, intercept, r2) = linear_fit(&lx, &ly);
        (slope, intercept.exp(), r2)
    };
    RegularityFit {
        center: center.to_vec(),
        radii,
        moduli,
        l2_moduli,
        exponent: if cap { raw.min(1.0) } else { raw },
        raw_exponent: raw,
        prefactor,
        r2,
        degenerate,
    }
}

fn rms_deviation(values: &[f64], verts: &[usize]) -> f64 {
    if verts.is_empty() {
        return 0.0;
    }
    let n = verts.len() as f64;
    let mean = verts.iter().map(|v| values[*v]).sum::<f64>() / n;
    (verts
        .iter()
        .map(|v| (values[*v] - mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Fits `sup_{B_r(center)} |u − u(center)| ≈ C r^α` over dyadic radii.
pub fn holder_fit(
    u: &ScalarField,
    center: &[f64],
    r_max: f64,
    levels: usize,
) -> Result<RegularityFit> {
    let mesh = u.mesh();
    let radii = dyadic_radii(mesh, r_max, levels)?;
    let u0 = u.interpolate(center);
    let mut moduli = Vec::with_capacity(levels);
    let mut l2 = Vec::with_capacity(levels);
    for r in &radii {
        let verts = mesh.vertices_in_ball(center, *r);
        moduli.push(
            verts
                .iter()
                .map(|v| (u.values()[*v] - u0).abs())
                .fold(0.0, f64::max),
        );
        l2.push(rms_deviation(u.values(), &verts));
    }
    Ok(fit(center, radii, moduli, l2, true))
}

/// Vertices with `u ≤ threshold` and an axis neighbor above it.
pub fn extract_free_boundary(u: &ScalarField, threshold: f64) -> Result<FreeBoundary> {
    if !(threshold > 0.0) {
        return Err(Error::param("threshold", "must be positive"));
    }
    let mesh = u.mesh();
    let vals = u.values();
    let vertices: Vec<usize> = (0..mesh.vertex_count())
        .filter(|v| {
            vals[*v] <= threshold
                && mesh
                    .vertex_neighbors(*v)
                    .iter()
                    .any(|n| vals[*n] > threshold)
        })
        .collect();
    let dim = mesh.dim();
    let points = vertices
        .iter()
        .map(|v| mesh.vertex_position(*v)[..dim].to_vec())
        .collect();
    Ok(FreeBoundary { points, vertices })
}

/// Per free-boundary point, fits `sup_{B_r(x₀)} u ≈ C r^β`.
pub fn boundary_growth_fit(
    u: &ScalarField,
    fb: &FreeBoundary,
    r_max: f64,
    levels: usize,
) -> Result<Vec<RegularityFit>> {
    let mesh = u.mesh();
    let radii = dyadic_radii(mesh, r_max, levels)?;
    Ok(fb
        .points
        .par_iter()
        .map(|x0| {
            let mut moduli = Vec::with_capacity(levels);
            let mut l2 = Vec::with_capacity(levels);
            for r in &radii {
                let verts = mesh.vertices_in_ball(x0, *r);
                moduli.push(verts.iter().map(|v| u.values()[*v]).fold(0.0, f64::max));
                l2.push(
                    (verts.iter().map(|v| u.values()[*v].powi(2)).sum::<f64>()
                        / verts.len().max(1) as f64)
                        .sqrt(),
                );
            }
            fit(x0, radii.clone(), moduli, l2, false)
        })
        .collect())
}

/// Points of the lattice `origin + spacing·ℤ^d` at which `u > threshold` and
/// the ball of radius `r_max` stays inside the box.
pub fn interior_sample_points(
    u: &ScalarField,
    threshold: f64,
    spacing: f64,
    r_max: f64,
) -> Vec<Vec<f64>> {
    let mesh = u.mesh();
    let dom = mesh.domain();
    let dim = mesh.dim();
    let counts: Vec<usize> = (0..dim)
        .map(|i| (dom.side_lengths[i] / spacing).floor() as usize + 1)
        .collect();
    let total: usize = counts.iter().product();
    (0..total)
        .filter_map(|mut k| {
            let x: Vec<f64> = (0..dim)
                .map(|i| {
                    let j = k % counts[i];
                    k /= counts[i];
                    dom.origin[i] + j as f64 * spacing
                })
                .collect();
            (dom.distance_to_boundary(&x) > r_max && u.interpolate(&x) > threshold).then_some(x)
        })
        .collect()
}

/// Holder fits at every point, in parallel.
pub fn holder_scan(
    u: &ScalarField,
    points: &[Vec<f64>],
    r_max: f64,
    levels: usize,
) -> Result<Vec<RegularityFit>> {
    points
        .par_iter()
        .map(|x| holder_fit(u, x, r_max, levels))
        .collect()
}

/// Summary statistics over reliable fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentStats {
    pub count: usize,
    pub reliable: usize,
    pub median: f64,
    pub p10: f64,
    pub min: f64,
    pub max: f64,
}

pub fn exponent_stats(fits: &[RegularityFit]) -> ExponentStats {
    let mut e: Vec<f64> = fits
        .iter()
        .filter(|f| f.is_reliable())
        .map(|f| f.exponent)
        .collect();
    e.sort_by(f64::total_cmp);
    let q = |p: f64| {
        if e.is_empty() {
            f64::NAN
        } else {
            e[((e.len() - 1) as f64 * p).round() as usize]
        }
    };
    ExponentStats {
        count: fits.len(),
        reliable: e.len(),
        median: q(0.5),
        p10: q(0.1),
        min: e.first().copied().unwrap_or(f64::NAN),
        max: e.last().copied().unwrap_or(f64::NAN),
    }
}
