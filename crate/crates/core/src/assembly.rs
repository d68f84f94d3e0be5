//! Matrix-free multilinear finite element forms with closed-form cell integrals.
//!
//! With constant `A` on a cell, the stiffness is `K_e = Σ_ij A_ij G^{ij}` where
//! `G^{ij}[a][b] = ∫ ∂_i φ_a ∂_j φ_b` factors into one-dimensional integrals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::CoeffField;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, ScalarField, MAX_CORNERS, MAX_DIM};

/// Cells per work unit, independent of the thread count.
const CHUNK_CELLS: usize = 2048;

type LocalMatrix = [[f64; MAX_CORNERS]; MAX_CORNERS];

/// Reference cell integrals for one mesh spacing.
#[derive(Debug, Clone)]
pub struct ElementMatrices {
    dim: usize,
    corners: usize,
    grad: [[LocalMatrix; MAX_DIM]; MAX_DIM],
    mass: LocalMatrix,
}

impl ElementMatrices {
    pub fn new(mesh: &Mesh) -> Self {
        let dim = mesh.dim();
        let corners = mesh.corners_per_cell();
        let h = mesh.h();
        // 1D integrals on [0, h]: mass φaφb, stiffness φa'φb', mixed φa'φb.
        let m1 = |a: usize, b: usize, h: f64| if a == b { h / 3.0 } else { h / 6.0 };
        let s1 = |a: usize, b: usize, h: f64| if a == b { 1.0 / h } else { -1.0 / h };
        let d1 = |a: usize, _b: usize| if a == 0 { -0.5 } else { 0.5 };

        let mut grad = [[[[0.0; MAX_CORNERS]; MAX_CORNERS]; MAX_DIM]; MAX_DIM];
        let mut mass = [[0.0; MAX_CORNERS]; MAX_CORNERS];
        for a in 0..corners {
            for b in 0..corners {
                let bit = |x: usize, k: usize| (x >> k) & 1;
                mass[a][b] = (0..dim).map(|k| m1(bit(a, k), bit(b, k), h[k])).product();
                for i in 0..dim {
                    for j in 0..dim {
                        let mut v = 1.0;
                        for k in 0..dim {
                            let (ak, bk) = (bit(a, k), bit(b, k));
                            v *= if i == j && k == i {
                                s1(ak, bk, h[k])
                            } else if k == i {
                                d1(ak, bk)
                            } else if k == j {
                                d1(bk, ak)
                            } else {
                                m1(ak, bk, h[k])
                            };
                        }
                        grad[i][j][a][b] = v;
                    }
                }
            }
        }
        Self {
            dim,
            corners,
            grad,
            mass,
        }
    }

    #[inline]
    pub fn stiffness(&self, a: &crate::coeff::SymMatrix) -> LocalMatrix {
        let mut k = [[0.0; MAX_CORNERS]; MAX_CORNERS];
        for i in 0..self.dim {
            for j in 0..self.dim {
                let aij = a.get(i, j);
                if aij == 0.0 {
                    continue;
                }
                let g = &self.grad[i][j];
                for p in 0..self.corners {
                    for q in 0..self.corners {
                        k[p][q] += aij * g[p][q];
                    }
                }
            }
        }
        k
    }

    pub fn mass(&self) -> &LocalMatrix {
        &self.mass
    }

    pub fn corners(&self) -> usize {
        self.corners
    }
}

#[inline]
fn gather(mesh: &Mesh, c: usize, u: &[f64]) -> ([usize; MAX_CORNERS], [f64; MAX_CORNERS]) {
    let verts = mesh.cell_vertices(c);
    let mut local = [0.0; MAX_CORNERS];
    for a in 0..mesh.corners_per_cell() {
        local[a] = u[verts[a]];
    }
    (verts, local)
}

#[inline]
fn quad(m: &LocalMatrix, x: &[f64; MAX_CORNERS], n: usize) -> f64 {
    let mut s = 0.0;
    for p in 0..n {
        let mut row = 0.0;
        for q in 0..n {
            row += m[p][q] * x[q];
        }
        s += x[p] * row;
    }
    s
}

fn check_mesh(u: &ScalarField, a: &CoeffField) -> Result<()> {
    if u.same_mesh(a.mesh()) {
        Ok(())
    } else {
        Err(Error::MeshMismatch)
    }
}

/// Per-cell `∫_cell ∇u·(A∇u)`.
pub fn cell_energies(u: &ScalarField, a: &CoeffField) -> Result<Vec<f64>> {
    check_mesh(u, a)?;
    let mesh = u.mesh();
    let em = ElementMatrices::new(mesh);
    let n = em.corners();
    let vals = u.values();
    Ok((0..mesh.cell_count())
        .into_par_iter()
        .with_min_len(CHUNK_CELLS)
        .map(|c| {
            let (_, x) = gather(mesh, c, vals);
            quad(&em.stiffness(a.cell(c)), &x, n)
        })
        .collect())
}

/// Per-cell `∫_cell u²`.
pub fn cell_masses(u: &ScalarField) -> Vec<f64> {
    let mesh = u.mesh();
    let em = ElementMatrices::new(mesh);
    let n = em.corners();
    let vals = u.values();
    (0..mesh.cell_count())
        .into_par_iter()
        .with_min_len(CHUNK_CELLS)
        .map(|c| {
            let (_, x) = gather(mesh, c, vals);
            quad(em.mass(), &x, n)
        })
        .collect()
}

/// `∫_B ∇u·(A∇u)`, exact for the multilinear interpolant.
pub fn dirichlet_energy(u: &ScalarField, a: &CoeffField) -> Result<f64> {
    Ok(cell_energies(u, a)?.iter().sum())
}

/// `∫_B u²`, exact for the multilinear interpolant.
pub fn mass(u: &ScalarField) -> f64 {
    cell_masses(u).iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub dirichlet: f64,
    pub mass: f64,
}

impl EnergyBreakdown {
    pub fn rayleigh_quotient(&self) -> f64 {
        self.dirichlet / self.mass
    }
}

pub fn energy_breakdown(u: &ScalarField, a: &CoeffField) -> Result<EnergyBreakdown> {
    Ok(EnergyBreakdown {
        dirichlet: dirichlet_energy(u, a)?,
        mass: mass(u),
    })
}

/// Scatter `Σ_cells P_eᵀ (local op) P_e x` in fixed chunks, summed in chunk order.
fn scatter<F>(mesh: &Mesh, x: &[f64], local_op: F) -> Vec<f64>
where
    F: Fn(usize, &[f64; MAX_CORNERS]) -> [f64; MAX_CORNERS] + Sync,
{
    let n = mesh.corners_per_cell();
    let cells = mesh.cell_count();
    let chunks: Vec<(usize, Vec<f64>)> = (0..cells.div_ceil(CHUNK_CELLS))
        .into_par_iter()
        .map(|chunk| {
            let c0 = chunk * CHUNK_CELLS;
            let c1 = (c0 + CHUNK_CELLS).min(cells);
            let lo = mesh.cell_vertices(c0)[0];
            let hi = mesh.cell_vertices(c1 - 1)[n - 1];
            let mut buf = vec![0.0; hi - lo + 1];
            for c in c0..c1 {
                let (verts, xe) = gather(mesh, c, x);
                let ye = local_op(c, &xe);
                for a in 0..n {
                    buf[verts[a] - lo] += ye[a];
                }
            }
            (lo, buf)
        })
        .collect();
    let mut out = vec![0.0; mesh.vertex_count()];
    for (lo, buf) in chunks {
        for (o, b) in out[lo..lo + buf.len()].iter_mut().zip(buf) {
            *o += b;
        }
    }
    out
}

#[inline]
fn matvec(m: &LocalMatrix, x: &[f64; MAX_CORNERS], n: usize) -> [f64; MAX_CORNERS] {
    let mut y = [0.0; MAX_CORNERS];
    for p in 0..n {
        let mut s = 0.0;
        for q in 0..n {
            s += m[p][q] * x[q];
        }
        y[p] = s;
    }
    y
}

/// Raw stiffness product `K x` on all vertices, no boundary handling.
pub fn stiffness_product(x: &[f64], a: &CoeffField) -> Vec<f64> {
    let mesh = a.mesh();
    let em = ElementMatrices::new(mesh);
    let n = em.corners();
    scatter(mesh, x, |c, xe| matvec(&em.stiffness(a.cell(c)), xe, n))
}

/// Raw consistent-mass product `M x` on all vertices.
pub fn mass_product(mesh: &Mesh, x: &[f64]) -> Vec<f64> {
    let em = ElementMatrices::new(mesh);
    let n = em.corners();
    scatter(mesh, x, |_, xe| matvec(em.mass(), xe, n))
}

/// Stiffness action `K u` (the gradient of `½ ∫∇u·A∇u`), zero on Dirichlet vertices.
pub fn apply_operator(u: &ScalarField, a: &CoeffField) -> Result<ScalarField> {
    check_mesh(u, a)?;
    let mut out = u.with_values(stiffness_product(u.values(), a))?;
    out.zero_trace();
    Ok(out)
}

/// Consistent mass action `M u` (the gradient of `½ ∫u²`), zero on Dirichlet vertices.
pub fn apply_mass(u: &ScalarField) -> ScalarField {
    let mut out = u
        .with_values(mass_product(u.mesh(), u.values()))
        .expect("same mesh");
    out.zero_trace();
    out
}

/// Diagonal of the stiffness matrix.
pub fn stiffness_diagonal(a: &CoeffField) -> Vec<f64> {
    let mesh = a.mesh();
    let em = ElementMatrices::new(mesh);
    let n = em.corners();
    let mut diag = vec![0.0; mesh.vertex_count()];
    for c in 0..mesh.cell_count() {
        let k = em.stiffness(a.cell(c));
        let verts = mesh.cell_vertices(c);
        for p in 0..n {
            diag[verts[p]] += k[p][p];
        }
    }
    diag
}

/// Euclidean inner product of vertex vectors.
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
