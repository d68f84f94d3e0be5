//! Small dense linear algebra: symmetric eigendecomposition via Householder
//! tridiagonalization and implicit QL, Cholesky factorization, and the
//! symmetric-definite generalized eigenproblem built from them.

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = self
            .data
            .iter()
            .fold(0.0f64, |a, x| a.max(x.abs()))
            .max(1.0);
        (0..self.n).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol * scale))
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Eigenvalues in ascending order; `vectors[(i, k)]` is component `i` of eigenvector `k`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymmetricEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.vectors.n).map(|i| self.vectors[(i, k)]).collect()
    }
}

/// Eigendecomposition of a symmetric matrix (only the lower triangle is read).
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<SymmetricEigen> {
    let n = a.n;
    let mut z = a.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            z[(i, j)] = z[(j, i)];
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut z, &mut d, &mut e);
    ql_implicit(&mut d, &mut e, &mut z)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|x, y| d[*x].total_cmp(&d[*y]));
    let mut vectors = DenseMatrix::zeros(n);
    for (k, src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, k)] = z[(i, *src)];
        }
    }
    Ok(SymmetricEigen {
        values: order.iter().map(|k| d[*k]).collect(),
        vectors,
    })
}

/// Householder reduction to tridiagonal form. On exit `z` holds the
/// accumulated orthogonal transform, `d` the diagonal and `e[1..]` the
/// sub-diagonal.
fn tridiagonalize(z: &mut DenseMatrix, d: &mut [f64], e: &mut [f64]) {
    let n = z.n;
    if n == 0 {
        return;
    }
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| z[(i, k)].abs()).sum();
            if scale == 0.0 {
                e[i] = z[(i, l)];
            } else {
                for k in 0..=l {
                    z[(i, k)] /= scale;
                    h += z[(i, k)] * z[(i, k)];
                }
                let f = z[(i, l)];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[(i, l)] = f - g;
                let mut f = 0.0;
                for j in 0..=l {
                    z[(j, i)] = z[(i, j)] / h;
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += z[(j, k)] * z[(i, k)];
                    }
                    for k in (j + 1)..=l {
                        g += z[(k, j)] * z[(i, k)];
                    }
                    e[j] = g / h;
                    f += e[j] * z[(i, j)];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = z[(i, j)];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        z[(j, k)] -= f * e[k] + g * z[(i, k)];
                    }
                }
            }
        } else {
            e[i] = z[(i, l)];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += z[(i, k)] * z[(k, j)];
                }
                for k in 0..i {
                    z[(k, j)] -= g * z[(k, i)];
                }
            }
        }
        d[i] = z[(i, i)];
        z[(i, i)] = 1.0;
        for j in 0..i {
            z[(j, i)] = 0.0;
            z[(i, j)] = 0.0;
        }
    }
}

/// Implicit QL iteration with Wilkinson-type shifts on a tridiagonal matrix.
fn ql_implicit(d: &mut [f64], e: &mut [f64], z: &mut DenseMatrix) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence {
                    iterations: iter,
                    residual: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let f = z[(k, i + 1)];
                    z[(k, i + 1)] = s * z[(k, i)] + c * f;
                    z[(k, i)] = c * z[(k, i)] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.n;
    let mut l = DenseMatrix::zeros(n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) {
            return Err(Error::Degenerate(format!(
                "matrix not positive definite at pivot {j}"
            )));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `K x = λ M x` with `K` symmetric and `M` symmetric positive definite.
/// Eigenvectors are `M`-orthonormal.
pub fn generalized_symmetric_eigen(k: &DenseMatrix, m: &DenseMatrix) -> Result<SymmetricEigen> {
    let n = k.n;
    let l = cholesky(m)?;
    // C = L^{-1} K L^{-T}: first W = L^{-1} K, then C = L^{-1} Wᵀ.
    let w = forward_substitute_columns(&l, k);
    let mut wt = DenseMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            wt[(i, j)] = w[(j, i)];
        }
    }
    let mut c = forward_substitute_columns(&l, &wt);
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = avg;
            c[(j, i)] = avg;
        }
    }
    let eig = symmetric_eigen(&c)?;
    // x = L^{-T} y
    let mut vectors = DenseMatrix::zeros(n);
    for col in 0..n {
        for i in (0..n).rev() {
            let mut s = eig.vectors[(i, col)];
            for j in (i + 1)..n {
                s -= l[(j, i)] * vectors[(j, col)];
            }
            vectors[(i, col)] = s / l[(i, i)];
        }
    }
    Ok(SymmetricEigen {
        values: eig.values,
        vectors,
    })
}

/// Returns `L^{-1} B` for lower-triangular `L`.
fn forward_substitute_columns(l: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let n = l.n;
    let mut x = DenseMatrix::zeros(n);
    for col in 0..n {
        for i in 0..n {
            let mut s = b[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
    }
    x
}

/// Eigenvalues of a symmetric 2x2 or 3x3 matrix given as rows, ascending.
pub fn small_symmetric_eigenvalues(rows: &[[f64; 3]], dim: usize) -> Result<Vec<f64>> {
    let mut m = DenseMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            m[(i, j)] = rows[i][j];
        }
    }
    Ok(symmetric_eigen(&m)?.values)
}
