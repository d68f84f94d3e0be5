//! Boundedness scan of the Caccioppoli ratio under radius halving.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rescale::{caccioppoli_ratio, RescaleParams};
use crate::error::{Error, Result};
use crate::mesh::ScalarField;

/// Grid resolution of every blow-up in the scan.
pub const SCAN_RESOLUTION: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaccioppoliSample {
    pub x0: Vec<f64>,
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl CaccioppoliSample {
    /// Largest `ratio(r/2) / ratio(r)`; zero-to-zero steps count as 1.
    pub fn max_growth(&self) -> f64 {
        self.ratios
            .windows(2)
            .map(|w| {
                if w[1] == 0.0 {
                    0.0
                } else if w[0] == 0.0 {
                    f64::INFINITY
                } else {
                    w[1] / w[0]
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaccioppoliScan {
    pub samples: Vec<CaccioppoliSample>,
    pub max_ratio: f64,
    pub max_growth: f64,
}

/// Picks `count` centers among vertices with `u > 0` and evaluates the ratio
/// at `r0, r0/2, …` (`halvings + 1` radii) with `κ = 1`, `ξ = 0`.
pub fn caccioppoli_scan(
    u: &ScalarField,
    count: usize,
    r0: f64,
    halvings: usize,
    seed: u64,
) -> Result<CaccioppoliScan> {
    let mesh = u.mesh();
    let support: Vec<usize> = (0..mesh.vertex_count())
        .filter(|v| u.values()[*v] > 0.0)
        .filter(|v| {
            mesh.domain()
                .distance_to_boundary(&mesh.vertex_position(*v)[..mesh.dim()])
                > r0
        })
        .collect();
    if support.is_empty() {
        return Err(Error::Degenerate("no admissible scan centers".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..count)
        .map(|_| {
            let v = support[rng.random_range(0..support.len())];
            mesh.vertex_position(v)[..mesh.dim()].to_vec()
        })
        .collect();
    let samples = centers
        .into_par_iter()
        .map(|x0| {
            let radii: Vec<f64> = (0..=halvings).map(|k| r0 * 0.5f64.powi(k as i32)).collect();
            let ratios = radii
                .iter()
                .map(|r| {
                    caccioppoli_ratio(u, &RescaleParams::new(&x0, 1.0, *r, 0.0), SCAN_RESOLUTION)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(CaccioppoliSample { x0, radii, ratios })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = samples
        .iter()
        .flat_map(|s| s.ratios.iter().copied())
        .fold(0.0, f64::max);
    let max_growth = samples.iter().map(|s| s.max_growth()).fold(0.0, f64::max);
    Ok(CaccioppoliScan {
        samples,
        max_ratio,
        max_growth,
    })
}
