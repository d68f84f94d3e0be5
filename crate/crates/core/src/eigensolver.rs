//! First Dirichlet eigenpair of `-∇·(A∇·)` on a vertex mask.
//!
//! Active vertices are the unknowns; every inactive vertex is a hard zero.
//! The iterative solver is block inverse iteration with Rayleigh–Ritz, each
//! solve done by Jacobi-preconditioned conjugate gradients. A dense
//! generalized eigensolve serves as the oracle on small masks.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{mass_product, stiffness_diagonal, stiffness_product, ElementMatrices};
use crate::coeff::CoeffField;
use crate::error::{Error, Result};
use crate::linalg::{generalized_symmetric_eigen, DenseMatrix};
use crate::mesh::{DomainMask, Mesh, ScalarField, MAX_DIM};

pub const MAX_OUTER: usize = 500;
pub const DENSE_LIMIT: usize = 4096;
const BLOCK: usize = 3;

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda1: f64,
    /// Unit mass, nonnegative, zero off the mask.
    pub eigenfunction: ScalarField,
    /// `‖Ku − λMu‖` in the lumped dual norm `(Σ r_v²/w_v)^{1/2}`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub lambda1: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl EigenResult {
    pub fn summary(&self) -> SolverSummary {
        SolverSummary {
            lambda1: self.lambda1,
            residual: self.residual,
            iterations: self.iterations,
        }
    }
}

struct MaskedPencil<'a> {
    mesh: &'a Arc<Mesh>,
    a: &'a CoeffField,
    active: &'a [bool],
}

impl MaskedPencil<'_> {
    fn stiffness(&self, x: &[f64]) -> Vec<f64> {
        let mut y = stiffness_product(x, self.a);
        self.restrict(&mut y);
        y
    }

    fn mass(&self, x: &[f64]) -> Vec<f64> {
        let mut y = mass_product(self.mesh, x);
        self.restrict(&mut y);
        y
    }

    fn restrict(&self, y: &mut [f64]) {
        for (yi, act) in y.iter_mut().zip(self.active) {
            if !*act {
                *yi = 0.0;
            }
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Jacobi-preconditioned CG for `K x = b` on the active set.
fn pcg(pencil: &MaskedPencil, inv_diag: &[f64], b: &[f64], rtol: f64) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 10 * n + 100;
    for it in 0..max_iter {
        let kp = pencil.stiffness(&p);
        let pkp = dot(&p, &kp);
        if !(pkp > 0.0) {
            return Err(Error::CgBreakdown { iterations: it });
        }
        let alpha = rz / pkp;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &kp, &mut r);
        if dot(&r, &r).sqrt() <= rtol * bnorm {
            return Ok(x);
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(inv_diag) {
            *zi = ri * di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::CgBreakdown {
        iterations: max_iter,
    })
}

/// Makes the eigenfunction nonnegative with unit mass. A sign flip when the
/// sum is negative; any remaining negative lobe (degenerate first eigenvalue
/// on a disconnected mask) is folded by absolute value.
fn normalize_sign(x: &mut [f64], pencil: &MaskedPencil) {
    let sum: f64 = x.iter().sum();
    if sum < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    if x.iter().any(|v| *v < 0.0) {
        x.iter_mut().for_each(|v| *v = v.abs());
    }
    let m = dot(x, &pencil.mass(x));
    let k = 1.0 / m.sqrt();
    x.iter_mut().for_each(|v| *v *= k);
}

fn residual_norm(pencil: &MaskedPencil, x: &[f64], lambda: f64) -> (f64, f64) {
    let kx = pencil.stiffness(x);
    let mx = pencil.mass(x);
    let rq = dot(x, &kx) / dot(x, &mx);
    let w = pencil.mesh.vertex_weights();
    let r2: f64 = kx
        .iter()
        .zip(&mx)
        .zip(w)
        .zip(pencil.active)
        .filter(|(_, act)| **act)
        .map(|(((k, m), w), _)| (k - lambda * m).powi(2) / w)
        .sum();
    (r2.sqrt(), rq)
}

fn check_inputs(mask: &DomainMask, a: &CoeffField) -> Result<()> {
    if !(mask.mesh().as_ref() == a.mesh().as_ref()) {
        return Err(Error::MeshMismatch);
    }
    if mask.active_count() == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

/// Smallest eigenpair of the stiffness/mass pencil restricted to the mask.
///
/// Stops once the Ritz value changes by less than `tol` (relative) between
/// sweeps and the residual is below `√tol · λ`.
pub fn lambda1(mask: &DomainMask, a: &CoeffField, tol: f64) -> Result<EigenResult> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    check_inputs(mask, a)?;
    let mesh = a.mesh();
    let active = mask.active();
    let pencil = MaskedPencil { mesh, a, active };
    let n = mesh.vertex_count();
    let ndof = mask.active_count();
    let inv_diag: Vec<f64> = stiffness_diagonal(a)
        .iter()
        .zip(active)
        .map(|(d, act)| if *act { 1.0 / d } else { 0.0 })
        .collect();
    let rtol = (tol * 1e-3).max(1e-14);

    let block = BLOCK.min(ndof);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut basis: Vec<Vec<f64>> = (0..block)
        .map(|k| {
            (0..n)
                .map(|v| {
                    if !active[v] {
                        0.0
                    } else if k == 0 {
                        1.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        })
        .collect();

    let mut lambda_prev = f64::INFINITY;
    let mut last_residual = f64::INFINITY;
    for iter in 1..=MAX_OUTER {
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
        for x in &basis {
            next.push(pcg(&pencil, &inv_diag, &pencil.mass(x), rtol)?);
        }
        let ritz = rayleigh_ritz(&pencil, next)?;
        let (lambda, vectors) = ritz;
        basis = vectors;
        let (res, _) = residual_norm(&pencil, &basis[0], lambda);
        last_residual = res;
        let change = (lambda - lambda_prev).abs() / lambda;
        lambda_prev = lambda;
        if change < tol && res < tol.sqrt() * lambda {
            let mut x = basis.swap_remove(0);
            normalize_sign(&mut x, &pencil);
            let (residual, rq) = residual_norm(&pencil, &x, lambda);
            return Ok(EigenResult {
                lambda1: rq,
                eigenfunction: ScalarField::from_values(mesh, x)?,
                residual,
                iterations: iter,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_OUTER,
        residual: last_residual,
    })
}

/// M-orthonormalizes the block, then returns the smallest Ritz value and the
/// Ritz vectors in ascending order.
fn rayleigh_ritz(pencil: &MaskedPencil, mut ys: Vec<Vec<f64>>) -> Result<(f64, Vec<Vec<f64>>)> {
    // Two passes of modified Gram–Schmidt in the M inner product.
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(ys.len());
    for mut y in ys.drain(..) {
        let norm0 = dot(&y, &pencil.mass(&y)).sqrt();
        for _ in 0..2 {
            for q in &kept {
                let c = dot(&pencil.mass(q), &y);
                axpy(-c, q, &mut y);
            }
        }
        let norm = dot(&y, &pencil.mass(&y)).sqrt();
        if norm > 1e-10 * norm0 && norm > 0.0 {
            y.iter_mut().for_each(|v| *v /= norm);
            kept.push(y);
        }
    }
    if kept.is_empty() {
        return Err(Error::Degenerate("inverse iteration collapsed".into()));
    }
    let p = kept.len();
    let ky: Vec<Vec<f64>> = kept.iter().map(|y| pencil.stiffness(y)).collect();
    let my: Vec<Vec<f64>> = kept.iter().map(|y| pencil.mass(y)).collect();
    let mut ks = DenseMatrix::zeros(p);
    let mut ms = DenseMatrix::zeros(p);
    for i in 0..p {
        for j in 0..p {
            ks[(i, j)] = 0.5 * (dot(&kept[i], &ky[j]) + dot(&kept[j], &ky[i]));
            ms[(i, j)] = 0.5 * (dot(&kept[i], &my[j]) + dot(&kept[j], &my[i]));
        }
    }
    let eig = generalized_symmetric_eigen(&ks, &ms)?;
    let n = kept[0].len();
    let vectors = (0..p)
        .map(|k| {
            let mut v = vec![0.0; n];
            for (i, y) in kept.iter().enumerate() {
                axpy(eig.vectors[(i, k)], y, &mut v);
            }
            v
        })
        .collect();
    Ok((eig.values[0], vectors))
}

/// Dense assembly of the restricted pencil and a full generalized eigensolve.
pub fn dense_oracle(mask: &DomainMask, a: &CoeffField) -> Result<EigenResult> {
    check_inputs(mask, a)?;
    let mesh = a.mesh();
    let active = mask.active();
    let dofs: Vec<usize> = (0..mesh.vertex_count()).filter(|v| active[*v]).collect();
    let ndof = dofs.len();
    if ndof > DENSE_LIMIT {
        return Err(Error::TooLarge {
            size: ndof,
            limit: DENSE_LIMIT,
        });
    }
    let mut local_index = vec![usize::MAX; mesh.vertex_count()];
    for (i, v) in dofs.iter().enumerate() {
        local_index[*v] = i;
    }
    let em = ElementMatrices::new(mesh);
    let corners = em.corners();
    let mut k = DenseMatrix::zeros(ndof);
    let mut m = DenseMatrix::zeros(ndof);
    for c in 0..mesh.cell_count() {
        let verts = mesh.cell_vertices(c);
        let ke = em.stiffness(a.cell(c));
        let me = em.mass();
        for p in 0..corners {
            let i = local_index[verts[p]];
            if i == usize::MAX {
                continue;
            }
            for q in 0..corners {
                let j = local_index[verts[q]];
                if j == usize::MAX {
                    continue;
                }
                k[(i, j)] += ke[p][q];
                m[(i, j)] += me[p][q];
            }
        }
    }
    let eig = generalized_symmetric_eigen(&k, &m)?;
    let mut x = vec![0.0; mesh.vertex_count()];
    for (i, v) in dofs.iter().enumerate() {
        x[*v] = eig.vectors[(i, 0)];
    }
    let pencil = MaskedPencil { mesh, a, active };
    normalize_sign(&mut x, &pencil);
    let lambda = eig.values[0];
    let (residual, _) = residual_norm(&pencil, &x, lambda);
    Ok(EigenResult {
        lambda1: lambda,
        eigenfunction: ScalarField::from_values(mesh, x)?,
        residual,
        iterations: 1,
    })
}

/// `λ₁(inner) ≥ λ₁(outer) − slack` for nested masks.
pub fn monotonicity_check(
    inner: &DomainMask,
    outer: &DomainMask,
    a: &CoeffField,
    tol: f64,
    slack: f64,
) -> Result<bool> {
    if let Err(v) = outer.contains(inner) {
        return Err(Error::NotNested { vertex: v });
    }
    let li = lambda1(inner, a, tol)?.lambda1;
    let lo = lambda1(outer, a, tol)?.lambda1;
    Ok(li >= lo - slack)
}

/// Dilates the mask by a Euclidean ball of the smallest radius whose dilation
/// has measure at least `target`. Box-boundary vertices stay inactive.
pub fn inflate_to_volume(mask: &DomainMask, target: f64) -> Result<DomainMask> {
    let mesh = mask.mesh();
    if mask.measure() >= target {
        return Ok(mask.clone());
    }
    let max = mesh
        .cells_per_axis()
        .iter()
        .zip(mesh.h())
        .map(|(n, h)| (*n as f64 - 2.0).max(0.0) * h)
        .product::<f64>();
    if target > max + 1e-12 * max {
        return Err(Error::Unreachable { target, max });
    }
    if mask.active_count() == 0 {
        return Err(Error::EmptyMask);
    }
    let dim = mesh.dim();
    let h = mesh.h();
    // Candidate radii: distinct physical lengths of integer offsets.
    let reach: Vec<usize> = mesh.cells_per_axis().to_vec();
    let mut radii_sq: BTreeSet<u64> = BTreeSet::new();
    let mut offsets: Vec<([i64; MAX_DIM], f64)> = Vec::new();
    let limit = {
        let span: f64 = mesh.domain().side_lengths.iter().map(|l| l * l).sum();
        span
    };
    let mut idx = [0i64; MAX_DIM];
    let lo: Vec<i64> = reach.iter().map(|r| -(*r as i64)).collect();
    idx[..dim].copy_from_slice(&lo);
    loop {
        let d2: f64 = (0..dim).map(|i| (idx[i] as f64 * h[i]).powi(2)).sum();
        if d2 <= limit {
            offsets.push((idx, d2));
            radii_sq.insert(d2.to_bits());
        }
        let mut axis = 0;
        loop {
            if axis == dim {
                break;
            }
            if idx[axis] < reach[axis] as i64 {
                idx[axis] += 1;
                break;
            }
            idx[axis] = lo[axis];
            axis += 1;
        }
        if axis == dim {
            break;
        }
    }
    let mut candidates: Vec<f64> = radii_sq.iter().map(|b| f64::from_bits(*b)).collect();
    candidates.sort_by(f64::total_cmp);
    offsets.sort_by(|a, b| a.1.total_cmp(&b.1));

    let seeds: Vec<[usize; MAX_DIM]> = (0..mesh.vertex_count())
        .filter(|v| mask.is_active(*v))
        .map(|v| mesh.vertex_multi_index(v))
        .collect();
    let dilate = |r2: f64| -> Result<DomainMask> {
        let mut active = mask.active().to_vec();
        for s in &seeds {
            'off: for (off, d2) in &offsets {
                if *d2 > r2 {
                    break;
                }
                let mut t = [0usize; MAX_DIM];
                for i in 0..dim {
                    let x = s[i] as i64 + off[i];
                    if x < 0 || x > reach[i] as i64 {
                        continue 'off;
                    }
                    t[i] = x as usize;
                }
                active[mesh.vertex_index(&t)] = true;
            }
        }
        DomainMask::new(mesh, active)
    };
    // Bisection over the sorted candidate radii.
    let (mut lo_i, mut hi_i) = (0usize, candidates.len() - 1);
    let top = dilate(candidates[hi_i])?;
    if top.measure() < target {
        return Err(Error::Unreachable {
            target,
            max: top.measure(),
        });
    }
    let mut best = top;
    while lo_i < hi_i {
        let mid = (lo_i + hi_i) / 2;
        let trial = dilate(candidates[mid])?;
        if trial.measure() >= target {
            hi_i = mid;
            best = trial;
        } else {
            lo_i = mid + 1;
        }
    }
    if best.measure() < target {
        best = dilate(candidates[hi_i])?;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::make_identity;
    use crate::mesh::BoxDomain;

    fn mesh(side: f64, n: usize) -> Arc<Mesh> {
        Mesh::build(BoxDomain::cube(2, side).unwrap(), &[n, n]).unwrap()
    }

    fn full_mask(m: &Arc<Mesh>) -> DomainMask {
        DomainMask::new(m, vec![true; m.vertex_count()]).unwrap()
    }

    #[test]
    fn single_dof_is_diagonal_ratio() {
        let m = mesh(3.0, 2);
        let a = make_identity(&m, 1.0).unwrap();
        let mask = full_mask(&m);
        let r = dense_oracle(&mask, &a).unwrap();
        // K₁₁ = 4·(2/3) = 8/3, M₁₁ = 4·(h²/9) with h = 1.5
        let expected = (8.0 / 3.0) / (4.0 * 1.5 * 1.5 / 9.0);
        assert!((r.lambda1 - expected).abs() < 1e-12);
        let it = lambda1(&mask, &a, 1e-12).unwrap();
        assert!((it.lambda1 - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_rejected() {
        let m = mesh(1.0, 4);
        let a = make_identity(&m, 1.0).unwrap();
        let mask = DomainMask::new(&m, vec![false; m.vertex_count()]).unwrap();
        assert!(matches!(lambda1(&mask, &a, 1e-8), Err(Error::EmptyMask)));
        assert!(matches!(dense_oracle(&mask, &a), Err(Error::EmptyMask)));
    }

    #[test]
    fn unit_square_matches_dense_and_scales() {
        let m = mesh(1.0, 16);
        let a = make_identity(&m, 1.0).unwrap();
        let mask = full_mask(&m);
        let it = lambda1(&mask, &a, 1e-11).unwrap();
        let dn = dense_oracle(&mask, &a).unwrap();
        assert!((it.lambda1 - dn.lambda1).abs() <= 1e-8 * dn.lambda1);
        assert!(it.eigenfunction.min() >= 0.0);
        let a3 = make_identity(&m, 3.0).unwrap();
        let it3 = lambda1(&mask, &a3, 1e-11).unwrap();
        assert!((it3.lambda1 - 3.0 * it.lambda1).abs() <= 1e-9 * it3.lambda1);
    }

    #[test]
    fn inflate_single_cell_to_block() {
        let m = mesh(10.0, 10);
        let mut active = vec![false; m.vertex_count()];
        for j in 4..=5 {
            for i in 4..=5 {
                active[m.vertex_index(&[i, j])] = true;
            }
        }
        let mask = DomainMask::new(&m, active).unwrap();
        assert_eq!(mask.measure(), 1.0);
        let same = inflate_to_volume(&mask, 1.0).unwrap();
        assert_eq!(same.active(), mask.active());
        let grown = inflate_to_volume(&mask, 9.0).unwrap();
        assert_eq!(grown.measure(), 9.0);
        for v in 0..m.vertex_count() {
            let idx = m.vertex_multi_index(v);
            let inside = (3..=6).contains(&idx[0]) && (3..=6).contains(&idx[1]);
            assert_eq!(grown.is_active(v), inside, "vertex {idx:?}");
        }
        assert!(inflate_to_volume(&mask, 100.0).is_err());
    }
}
