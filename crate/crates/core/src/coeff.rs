//! Piecewise-constant symmetric coefficient fields `A(x)` with `θI ≤ A ≤ ΘI`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::small_symmetric_eigenvalues;
use crate::mesh::{Mesh, MAX_DIM};

const SYMMETRY_TOL: f64 = 1e-12;
const BOUND_TOL: f64 = 1e-12;

/// Symmetric `dim x dim` matrix stored densely in a 3x3 array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl SymMatrix {
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in rows.iter().enumerate() {
            m[i][..dim].copy_from_slice(&row[..dim]);
        }
        Self { dim, m }
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        Self::diagonal(&vec![scale; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, d) in diag.iter().enumerate() {
            m[i][i] = *d;
        }
        Self { dim: diag.len(), m }
    }

    /// Builds from the row-wise upper triangle `a11, a12, .., a1d, a22, ..`.
    pub fn from_upper(dim: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != dim * (dim + 1) / 2 {
            return Err(Error::Format(format!(
                "expected {} upper-triangle entries, got {}",
                dim * (dim + 1) / 2,
                upper.len()
            )));
        }
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        let mut k = 0;
        for i in 0..dim {
            for j in i..dim {
                m[i][j] = upper[k];
                m[j][i] = upper[k];
                k += 1;
            }
        }
        Ok(Self { dim, m })
    }

    pub fn upper(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * (self.dim + 1) / 2);
        for i in 0..self.dim {
            for j in i..self.dim {
                out.push(self.m[i][j]);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for x in row.iter_mut() {
                *x *= c;
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        let scale = self
            .m
            .iter()
            .flatten()
            .fold(0.0f64, |a, x| a.max(x.abs()))
            .max(1.0);
        (0..self.dim)
            .all(|i| (0..i).all(|j| (self.m[i][j] - self.m[j][i]).abs() <= SYMMETRY_TOL * scale))
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim == 2 {
            let (a, b, d) = (
                self.m[0][0],
                0.5 * (self.m[0][1] + self.m[1][0]),
                self.m[1][1],
            );
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            return vec![mean - rad, mean + rad];
        }
        small_symmetric_eigenvalues(&self.m, self.dim).expect("3x3 symmetric eigensolve converges")
    }

    fn rotated(diag: &[f64], q: &[[f64; MAX_DIM]; MAX_DIM]) -> Self {
        // Qᵀ D Q
        let dim = diag.len();
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..dim {
            for j in 0..dim {
                m[i][j] = (0..dim).map(|k| q[k][i] * diag[k] * q[k][j]).sum();
            }
        }
        for i in 0..dim {
            for j in 0..i {
                let avg = 0.5 * (m[i][j] + m[j][i]);
                m[i][j] = avg;
                m[j][i] = avg;
            }
        }
        Self { dim, m }
    }
}

/// Declared ellipticity bounds `θ ≤ Θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipticity {
    pub theta: f64,
    pub big_theta: f64,
}

impl Ellipticity {
    pub fn new(theta: f64, big_theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::param("theta", format!("{theta} must be positive")));
        }
        if !(big_theta >= theta) || !big_theta.is_finite() {
            return Err(Error::param(
                "big_theta",
                format!("{big_theta} must be finite and at least theta = {theta}"),
            ));
        }
        Ok(Self { theta, big_theta })
    }

    pub fn contrast(&self) -> f64 {
        self.big_theta / self.theta
    }
}

#[derive(Debug, Clone)]
pub struct CoeffField {
    mesh: Arc<Mesh>,
    matrices: Vec<SymMatrix>,
    bounds: Ellipticity,
}

impl CoeffField {
    /// Wraps per-cell matrices, checking symmetry and the declared bounds.
    pub fn new(mesh: &Arc<Mesh>, matrices: Vec<SymMatrix>, bounds: Ellipticity) -> Result<Self> {
        if matrices.len() != mesh.cell_count() {
            return Err(Error::LengthMismatch {
                expected: mesh.cell_count(),
                actual: matrices.len(),
            });
        }
        if let Some(bad) = matrices.iter().position(|a| a.dim() != mesh.dim()) {
            return Err(Error::param(
                "matrices",
                format!("cell {bad} matrix has the wrong dimension"),
            ));
        }
        let field = Self {
            mesh: Arc::clone(mesh),
            matrices,
            bounds,
        };
        let report = validate_ellipticity(&field)?;
        if let Some(v) = report.first_violation {
            return Err(Error::EllipticityViolation {
                cell: v.cell,
                eigenvalue: v.eigenvalue,
                theta: bounds.theta,
                big_theta: bounds.big_theta,
            });
        }
        Ok(field)
    }

    /// Declared bounds are taken from the observed eigenvalue range.
    pub fn from_matrices(mesh: &Arc<Mesh>, matrices: Vec<SymMatrix>) -> Result<Self> {
        let (lo, hi) = matrices
            .iter()
            .flat_map(|a| a.eigenvalues())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
                (lo.min(e), hi.max(e))
            });
        let bounds = Ellipticity::new(lo, hi)?;
        Self::new(mesh, matrices, bounds)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn matrices(&self) -> &[SymMatrix] {
        &self.matrices
    }

    #[inline]
    pub fn cell(&self, c: usize) -> &SymMatrix {
        &self.matrices[c]
    }

    pub fn bounds(&self) -> Ellipticity {
        self.bounds
    }

    pub fn theta(&self) -> f64 {
        self.bounds.theta
    }

    pub fn big_theta(&self) -> f64 {
        self.bounds.big_theta
    }

    /// `cA` with bounds scaled accordingly.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::param("scale", format!("{c} must be positive")));
        }
        Ok(Self {
            mesh: Arc::clone(&self.mesh),
            matrices: self.matrices.iter().map(|a| a.scale(c)).collect(),
            bounds: Ellipticity::new(self.bounds.theta * c, self.bounds.big_theta * c)?,
        })
    }
}

pub fn make_identity(mesh: &Arc<Mesh>, scale: f64) -> Result<CoeffField> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::param("scale", format!("{scale} must be positive")));
    }
    let a = SymMatrix::scaled_identity(mesh.dim(), scale);
    Ok(CoeffField {
        mesh: Arc::clone(mesh),
        matrices: vec![a; mesh.cell_count()],
        bounds: Ellipticity::new(scale, scale)?,
    })
}

/// Block checkerboard: cell `(i, j, ..)` gets `a_even` when
/// `Σ ⌊index/block⌋` is even, else `a_odd`.
pub fn make_checkerboard(
    mesh: &Arc<Mesh>,
    block_cells: usize,
    a_even: SymMatrix,
    a_odd: SymMatrix,
    bounds: Ellipticity,
) -> Result<CoeffField> {
    if block_cells == 0 {
        return Err(Error::param("block_cells", "must be at least 1"));
    }
    for (name, a) in [("a_even", &a_even), ("a_odd", &a_odd)] {
        if a.dim() != mesh.dim() {
            return Err(Error::param(name, "matrix dimension differs from mesh"));
        }
        if !a.is_symmetric() {
            return Err(Error::param(name, "matrix is not symmetric"));
        }
    }
    let dim = mesh.dim();
    let matrices = (0..mesh.cell_count())
        .map(|c| {
            let idx = mesh.cell_multi_index(c);
            let parity: usize = idx[..dim].iter().map(|i| i / block_cells).sum();
            if parity.is_multiple_of(2) {
                a_even
            } else {
                a_odd
            }
        })
        .collect();
    CoeffField::new(mesh, matrices, bounds)
}

/// Per block of `block_cells^d` cells, a matrix `QᵀDQ` with `Q` a uniformly
/// random rotation and `D` diagonal with entries uniform in `[θ, Θ]`.
pub fn make_random_piecewise(
    mesh: &Arc<Mesh>,
    seed: u64,
    bounds: Ellipticity,
    block_cells: usize,
) -> Result<CoeffField> {
    if block_cells == 0 {
        return Err(Error::param("block_cells", "must be at least 1"));
    }
    let dim = mesh.dim();
    let mut blocks = [1usize; MAX_DIM];
    for i in 0..dim {
        blocks[i] = mesh.cells_per_axis()[i].div_ceil(block_cells);
    }
    let block_count: usize = blocks[..dim].iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block_matrices: Vec<SymMatrix> = (0..block_count)
        .map(|_| {
            let diag: Vec<f64> = (0..dim)
                .map(|_| {
                    if bounds.big_theta > bounds.theta {
                        rng.random_range(bounds.theta..=bounds.big_theta)
                    } else {
                        bounds.theta
                    }
                })
                .collect();
            let q = random_rotation(&mut rng, dim);
            if bounds.big_theta == bounds.theta {
                SymMatrix::scaled_identity(dim, bounds.theta)
            } else {
                SymMatrix::rotated(&diag, &q)
            }
        })
        .collect();
    let matrices = (0..mesh.cell_count())
        .map(|c| {
            let idx = mesh.cell_multi_index(c);
            let mut b = 0;
            let mut stride = 1;
            for i in 0..dim {
                b += (idx[i] / block_cells) * stride;
                stride *= blocks[i];
            }
            block_matrices[b]
        })
        .collect();
    CoeffField::new(mesh, matrices, bounds)
}

fn random_rotation(rng: &mut ChaCha8Rng, dim: usize) -> [[f64; MAX_DIM]; MAX_DIM] {
    let mut q = [[0.0; MAX_DIM]; MAX_DIM];
    if dim == 2 {
        let t: f64 = rng.random_range(0.0..2.0 * PI);
        let (s, c) = t.sin_cos();
        q[0] = [c, -s, 0.0];
        q[1] = [s, c, 0.0];
        return q;
    }
    // Unit quaternion from four normals is uniform on SO(3).
    let mut w = [0.0f64; 4];
    loop {
        for x in w.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            for x in w.iter_mut() {
                *x /= n;
            }
            break;
        }
    }
    let [a, b, c, d] = w;
    q[0] = [
        a * a + b * b - c * c - d * d,
        2.0 * (b * c - a * d),
        2.0 * (b * d + a * c),
    ];
    q[1] = [
        2.0 * (b * c + a * d),
        a * a - b * b + c * c - d * d,
        2.0 * (c * d - a * b),
    ];
    q[2] = [
        2.0 * (b * d - a * c),
        2.0 * (c * d + a * b),
        a * a - b * b - c * c + d * d,
    ];
    q
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundViolation {
    pub cell: usize,
    pub eigenvalue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityReport {
    pub theta_observed: f64,
    pub big_theta_observed: f64,
    /// First cell whose spectrum leaves the declared `[θ, Θ]` (with 1e-12 slack).
    pub first_violation: Option<BoundViolation>,
}

/// Observed extreme cell eigenvalues; asymmetric cells are an error.
pub fn validate_ellipticity(a: &CoeffField) -> Result<EllipticityReport> {
    let b = a.bounds;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut first_violation = None;
    let slack = BOUND_TOL * b.big_theta.max(1.0);
    for (cell, m) in a.matrices.iter().enumerate() {
        if !m.is_symmetric() {
            return Err(Error::AsymmetricMatrix { cell });
        }
        for e in m.eigenvalues() {
            lo = lo.min(e);
            hi = hi.max(e);
            if first_violation.is_none() && (e < b.theta - slack || e > b.big_theta + slack) {
                first_violation = Some(BoundViolation {
                    cell,
                    eigenvalue: e,
                });
            }
        }
    }
    Ok(EllipticityReport {
        theta_observed: lo,
        big_theta_observed: hi,
        first_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoxDomain;

    fn mesh(n: usize) -> Arc<Mesh> {
        Mesh::build(BoxDomain::cube(2, 1.0).unwrap(), &[n, n]).unwrap()
    }

    #[test]
    fn identity_bounds() {
        let m = mesh(4);
        let a = make_identity(&m, 1.0).unwrap();
        let r = validate_ellipticity(&a).unwrap();
        assert_eq!((r.theta_observed, r.big_theta_observed), (1.0, 1.0));
        let a2 = make_identity(&m, 2.0).unwrap();
        assert_eq!(a2.cell(3).get(0, 0), 2.0);
        assert_eq!((a2.theta(), a2.big_theta()), (2.0, 2.0));
        assert!(make_identity(&m, 0.0).is_err());
        assert!(make_identity(&m, -1.0).is_err());
    }

    #[test]
    fn checkerboard_cases() {
        let m = mesh(8);
        let i2 = SymMatrix::scaled_identity(2, 1.0);
        let same = make_checkerboard(&m, 2, i2, i2, Ellipticity::new(1.0, 1.0).unwrap()).unwrap();
        let id = make_identity(&m, 1.0).unwrap();
        assert_eq!(same.matrices(), id.matrices());

        let five = SymMatrix::diagonal(&[5.0, 5.0]);
        let whole =
            make_checkerboard(&m, 8, i2, five, Ellipticity::new(1.0, 5.0).unwrap()).unwrap();
        assert!(whole.matrices().iter().all(|a| *a == i2));

        let cb = make_checkerboard(&m, 2, i2, five, Ellipticity::new(1.0, 5.0).unwrap()).unwrap();
        let r = validate_ellipticity(&cb).unwrap();
        assert_eq!((r.theta_observed, r.big_theta_observed), (1.0, 5.0));
        assert_eq!(*cb.cell(m.cell_index(&[2, 0])), five);
        assert_eq!(*cb.cell(m.cell_index(&[2, 2])), i2);
    }

    #[test]
    fn checkerboard_rejects_out_of_bounds_and_asymmetric() {
        let m = mesh(4);
        let i2 = SymMatrix::scaled_identity(2, 1.0);
        let big = SymMatrix::diagonal(&[1.0, 7.0]);
        let err =
            make_checkerboard(&m, 1, i2, big, Ellipticity::new(1.0, 5.0).unwrap()).unwrap_err();
        match err {
            Error::EllipticityViolation { eigenvalue, .. } => assert_eq!(eigenvalue, 7.0),
            other => panic!("unexpected {other}"),
        }
        let skew = SymMatrix::from_rows(&[&[2.0, 1.0], &[0.0, 2.0]]);
        assert!(make_checkerboard(&m, 1, i2, skew, Ellipticity::new(1.0, 5.0).unwrap()).is_err());
    }

    #[test]
    fn hand_eigenvalues() {
        let m = mesh(3);
        let a = SymMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let f = CoeffField::from_matrices(&m, vec![a; m.cell_count()]).unwrap();
        let r = validate_ellipticity(&f).unwrap();
        assert!((r.theta_observed - 1.0).abs() < 1e-15);
        assert!((r.big_theta_observed - 3.0).abs() < 1e-15);

        let d = SymMatrix::diagonal(&[1.0, 5.0]);
        let f = CoeffField::from_matrices(&m, vec![d; m.cell_count()]).unwrap();
        let r = validate_ellipticity(&f).unwrap();
        assert_eq!((r.theta_observed, r.big_theta_observed), (1.0, 5.0));
    }

    #[test]
    fn random_degenerate_bounds_give_constant() {
        let m = mesh(6);
        for seed in [0, 5, 99] {
            let f =
                make_random_piecewise(&m, seed, Ellipticity::new(3.0, 3.0).unwrap(), 2).unwrap();
            assert!(f
                .matrices()
                .iter()
                .all(|a| *a == SymMatrix::scaled_identity(2, 3.0)));
        }
    }

    #[test]
    fn random_is_deterministic() {
        let m = Mesh::build(BoxDomain::cube(3, 1.0).unwrap(), &[4, 4, 4]).unwrap();
        let b = Ellipticity::new(0.5, 4.0).unwrap();
        let f1 = make_random_piecewise(&m, 42, b, 2).unwrap();
        let f2 = make_random_piecewise(&m, 42, b, 2).unwrap();
        let f3 = make_random_piecewise(&m, 43, b, 2).unwrap();
        assert_eq!(f1.matrices(), f2.matrices());
        assert_ne!(f1.matrices(), f3.matrices());
    }

    #[test]
    fn upper_triangle_round_trip() {
        let a = SymMatrix::from_rows(&[&[1.0, 0.2, 0.3], &[0.2, 2.0, 0.4], &[0.3, 0.4, 3.0]]);
        assert_eq!(a.upper(), vec![1.0, 0.2, 0.3, 2.0, 0.4, 3.0]);
        assert_eq!(SymMatrix::from_upper(3, &a.upper()).unwrap(), a);
    }
}
