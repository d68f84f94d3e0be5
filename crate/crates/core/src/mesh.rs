//! Structured tensor-product grid over an axis-aligned box.
//!
//! Vertices are numbered with the first axis fastest:
//! `v = i + (nx+1)*(j + (ny+1)*k)`. Cells use the same scheme with `nx, ny`.
//! Local corner `a` of a cell has offset `(a >> axis) & 1` along each axis.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;
pub const MAX_CORNERS: usize = 1 << MAX_DIM;
/// Grid coordinates this close to an integer are snapped onto the grid line.
const SNAP_TOL: f64 = 1e-9;

/// Axis-aligned bounding box standing in for the container `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub dim: usize,
    pub side_lengths: Vec<f64>,
    pub origin: Vec<f64>,
}

impl BoxDomain {
    pub fn new(side_lengths: &[f64], origin: &[f64]) -> Result<Self> {
        let dim = side_lengths.len();
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidBox(format!("dimension {dim} not in {{2,3}}")));
        }
        if origin.len() != dim {
            return Err(Error::InvalidBox(format!(
                "origin has {} components, expected {dim}",
                origin.len()
            )));
        }
        if let Some(l) = side_lengths.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "side length {l} must be positive"
            )));
        }
        Ok(Self {
            dim,
            side_lengths: side_lengths.to_vec(),
            origin: origin.to_vec(),
        })
    }

    /// Box `[0, side]^dim`.
    pub fn cube(dim: usize, side: f64) -> Result<Self> {
        Self::new(&vec![side; dim], &vec![0.0; dim])
    }

    pub fn volume(&self) -> f64 {
        self.side_lengths.iter().product()
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.origin[i] + 0.5 * self.side_lengths[i])
            .collect()
    }

    /// Distance from an interior point to the box boundary (negative outside).
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        (0..self.dim)
            .map(|i| {
                let lo = x[i] - self.origin[i];
                let hi = self.origin[i] + self.side_lengths[i] - x[i];
                lo.min(hi)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// A corner of a cell: the global vertex and its local corner number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellCorner {
    pub cell: usize,
    pub local: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    domain: BoxDomain,
    cells: [usize; MAX_DIM],
    h: [f64; MAX_DIM],
    vertex_stride: [usize; MAX_DIM],
    cell_stride: [usize; MAX_DIM],
    vertex_count: usize,
    cell_count: usize,
    dirichlet: Vec<bool>,
    weights: Vec<f64>,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain && self.cells == other.cells
    }
}

impl Mesh {
    /// Builds the grid; every vertex on the box boundary is flagged Dirichlet.
    pub fn build(domain: BoxDomain, cells_per_axis: &[usize]) -> Result<Arc<Mesh>> {
        let dim = domain.dim;
        if cells_per_axis.len() != dim {
            return Err(Error::InvalidResolution(format!(
                "{} resolutions given for a {dim}-dimensional box",
                cells_per_axis.len()
            )));
        }
        if let Some(n) = cells_per_axis.iter().find(|n| **n < 2) {
            return Err(Error::InvalidResolution(format!(
                "{n} cells per axis, need at least 2"
            )));
        }
        let mut cells = [1usize; MAX_DIM];
        let mut h = [1.0; MAX_DIM];
        for i in 0..dim {
            cells[i] = cells_per_axis[i];
            h[i] = domain.side_lengths[i] / cells[i] as f64;
        }
        let mut vertex_stride = [0usize; MAX_DIM];
        let mut cell_stride = [0usize; MAX_DIM];
        let (mut vs, mut cs) = (1, 1);
        for i in 0..dim {
            vertex_stride[i] = vs;
            cell_stride[i] = cs;
            vs *= cells[i] + 1;
            cs *= cells[i];
        }
        let mut mesh = Mesh {
            domain,
            cells,
            h,
            vertex_stride,
            cell_stride,
            vertex_count: vs,
            cell_count: cs,
            dirichlet: Vec::new(),
            weights: Vec::new(),
        };
        mesh.dirichlet = (0..vs)
            .map(|v| {
                let idx = mesh.vertex_multi_index(v);
                (0..dim).any(|i| idx[i] == 0 || idx[i] == mesh.cells[i])
            })
            .collect();
        let cell_vol = mesh.cell_volume();
        let share = cell_vol / (1usize << dim) as f64;
        mesh.weights = (0..vs)
            .map(|v| share * mesh.vertex_cells(v).len() as f64)
            .collect();
        Ok(Arc::new(mesh))
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells[..self.dim()]
    }

    pub fn h(&self) -> &[f64] {
        &self.h[..self.dim()]
    }

    pub fn h_min(&self) -> f64 {
        self.h().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    pub fn corners_per_cell(&self) -> usize {
        1 << self.dim()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().iter().product()
    }

    pub fn is_dirichlet(&self, v: usize) -> bool {
        self.dirichlet[v]
    }

    pub fn dirichlet_flags(&self) -> &[bool] {
        &self.dirichlet
    }

    /// Lumped (row-sum) mass of each vertex; sums to the box volume.
    pub fn vertex_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn vertex_multi_index(&self, v: usize) -> [usize; MAX_DIM] {
        let mut idx = [0usize; MAX_DIM];
        let mut rest = v;
        for i in 0..self.dim() {
            let n = self.cells[i] + 1;
            idx[i] = rest % n;
            rest /= n;
        }
        idx
    }

    pub fn vertex_index(&self, idx: &[usize]) -> usize {
        (0..self.dim())
            .map(|i| idx[i] * self.vertex_stride[i])
            .sum()
    }

    pub fn cell_multi_index(&self, c: usize) -> [usize; MAX_DIM] {
        let mut idx = [0usize; MAX_DIM];
        let mut rest = c;
        for i in 0..self.dim() {
            idx[i] = rest % self.cells[i];
            rest /= self.cells[i];
        }
        idx
    }

    pub fn cell_index(&self, idx: &[usize]) -> usize {
        (0..self.dim()).map(|i| idx[i] * self.cell_stride[i]).sum()
    }

    /// Global vertex numbers of the cell corners, in local corner order.
    pub fn cell_vertices(&self, c: usize) -> [usize; MAX_CORNERS] {
        let idx = self.cell_multi_index(c);
        let base = self.vertex_index(&idx);
        let mut out = [0usize; MAX_CORNERS];
        for (a, slot) in out.iter_mut().enumerate().take(self.corners_per_cell()) {
            *slot = base
                + (0..self.dim())
                    .map(|i| ((a >> i) & 1) * self.vertex_stride[i])
                    .sum::<usize>();
        }
        out
    }

    /// Cells touching a vertex together with the vertex's local corner number in each.
    pub fn vertex_cells(&self, v: usize) -> Vec<CellCorner> {
        let idx = self.vertex_multi_index(v);
        let dim = self.dim();
        let mut out = Vec::with_capacity(self.corners_per_cell());
        'corner: for local in 0..self.corners_per_cell() {
            let mut cidx = [0usize; MAX_DIM];
            for i in 0..dim {
                let offset = (local >> i) & 1;
                if offset == 1 {
                    if idx[i] == 0 {
                        continue 'corner;
                    }
                    cidx[i] = idx[i] - 1;
                } else {
                    if idx[i] == self.cells[i] {
                        continue 'corner;
                    }
                    cidx[i] = idx[i];
                }
            }
            out.push(CellCorner {
                cell: self.cell_index(&cidx),
                local,
            });
        }
        out
    }

    /// Axis-aligned vertex neighbors (up to `2*dim`).
    pub fn vertex_neighbors(&self, v: usize) -> Vec<usize> {
        let idx = self.vertex_multi_index(v);
        let mut out = Vec::with_capacity(2 * self.dim());
        for i in 0..self.dim() {
            if idx[i] > 0 {
                out.push(v - self.vertex_stride[i]);
            }
            if idx[i] < self.cells[i] {
                out.push(v + self.vertex_stride[i]);
            }
        }
        out
    }

    pub fn vertex_position(&self, v: usize) -> [f64; MAX_DIM] {
        let idx = self.vertex_multi_index(v);
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.dim() {
            x[i] = self.domain.origin[i] + idx[i] as f64 * self.h[i];
        }
        x
    }

    pub fn cell_center(&self, c: usize) -> [f64; MAX_DIM] {
        let idx = self.cell_multi_index(c);
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.dim() {
            x[i] = self.domain.origin[i] + (idx[i] as f64 + 0.5) * self.h[i];
        }
        x
    }

    /// Cell containing `x` (clamped into the box) and the local coordinates in `[0,1]^d`.
    pub fn locate(&self, x: &[f64]) -> (usize, [f64; MAX_DIM]) {
        let mut cidx = [0usize; MAX_DIM];
        let mut local = [0.0; MAX_DIM];
        for i in 0..self.dim() {
            let mut t = (x[i] - self.domain.origin[i]) / self.h[i];
            if (t - t.round()).abs() < SNAP_TOL {
                t = t.round();
            }
            let n = self.cells[i];
            let k = (t.floor().max(0.0) as usize).min(n - 1);
            cidx[i] = k;
            local[i] = (t - k as f64).clamp(0.0, 1.0);
        }
        (self.cell_index(&cidx), local)
    }

    /// Vertices whose position lies within `radius` of `center` (closed ball).
    pub fn vertices_in_ball(&self, center: &[f64], radius: f64) -> Vec<usize> {
        let dim = self.dim();
        let mut lo = [0usize; MAX_DIM];
        let mut hi = [0usize; MAX_DIM];
        for i in 0..dim {
            let a = ((center[i] - radius - self.domain.origin[i]) / self.h[i]).floor();
            let b = ((center[i] + radius - self.domain.origin[i]) / self.h[i]).ceil();
            lo[i] = a.max(0.0) as usize;
            hi[i] = (b.max(0.0) as usize).min(self.cells[i]);
        }
        let r2 = radius * radius * (1.0 + 1e-12);
        let mut out = Vec::new();
        let mut idx = lo;
        loop {
            let v = self.vertex_index(&idx);
            let p = self.vertex_position(v);
            let d2: f64 = (0..dim).map(|i| (p[i] - center[i]).powi(2)).sum();
            if d2 <= r2 {
                out.push(v);
            }
            let mut axis = 0;
            loop {
                if axis == dim {
                    return out;
                }
                if idx[axis] < hi[axis] {
                    idx[axis] += 1;
                    break;
                }
                idx[axis] = lo[axis];
                axis += 1;
            }
        }
    }
}

/// Real values on the mesh vertices.
#[derive(Debug, Clone)]
pub struct ScalarField {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        Self {
            mesh: Arc::clone(mesh),
            values: vec![0.0; mesh.vertex_count()],
        }
    }

    pub fn from_values(mesh: &Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.vertex_count() {
            return Err(Error::LengthMismatch {
                expected: mesh.vertex_count(),
                actual: values.len(),
            });
        }
        Ok(Self {
            mesh: Arc::clone(mesh),
            values,
        })
    }

    pub fn from_fn(mesh: &Arc<Mesh>, f: impl Fn(&[f64]) -> f64) -> Self {
        let dim = mesh.dim();
        let values = (0..mesh.vertex_count())
            .map(|v| f(&mesh.vertex_position(v)[..dim]))
            .collect();
        Self {
            mesh: Arc::clone(mesh),
            values,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_values(&self.mesh, values)
    }

    pub fn same_mesh(&self, other: &Mesh) -> bool {
        std::ptr::eq(self.mesh.as_ref(), other) || *self.mesh == *other
    }

    /// Sets every Dirichlet vertex to zero.
    pub fn zero_trace(&mut self) {
        for (v, d) in self.mesh.dirichlet_flags().iter().enumerate() {
            if *d {
                self.values[v] = 0.0;
            }
        }
    }

    pub fn has_zero_trace(&self) -> bool {
        self.mesh
            .dirichlet_flags()
            .iter()
            .zip(&self.values)
            .all(|(d, u)| !*d || *u == 0.0)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Multilinear interpolation; points outside the box evaluate to 0 (zero extension).
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let mesh = &self.mesh;
        let dim = mesh.dim();
        let tol = 1e-12 * mesh.h_min();
        for i in 0..dim {
            let lo = mesh.domain.origin[i];
            let hi = lo + mesh.domain.side_lengths[i];
            if x[i] < lo - tol || x[i] > hi + tol {
                return 0.0;
            }
        }
        let (c, t) = mesh.locate(x);
        let verts = mesh.cell_vertices(c);
        let mut acc = 0.0;
        for (a, v) in verts.iter().enumerate().take(mesh.corners_per_cell()) {
            let mut w = 1.0;
            for (i, ti) in t.iter().enumerate().take(dim) {
                w *= if (a >> i) & 1 == 1 { *ti } else { 1.0 - ti };
            }
            if w != 0.0 {
                acc += w * self.values[*v];
            }
        }
        acc
    }
}

/// Indicator of the open ball, sampled at vertices.
pub fn ball_indicator(mesh: &Arc<Mesh>, center: &[f64], radius: f64) -> Result<ScalarField> {
    let dim = mesh.dim();
    if center.len() != dim {
        return Err(Error::param(
            "center",
            format!("expected {dim} coordinates"),
        ));
    }
    if !(radius >= 0.0) {
        return Err(Error::param("radius", "must be nonnegative"));
    }
    if mesh.domain().distance_to_boundary(center) <= radius {
        return Err(Error::BallOutsideBox {
            center: center.to_vec(),
            radius,
        });
    }
    let r2 = radius * radius;
    Ok(ScalarField::from_fn(mesh, |x| {
        let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
        if d2 < r2 {
            1.0
        } else {
            0.0
        }
    }))
}

/// Boolean vertex set standing in for a candidate domain `Ω`.
#[derive(Debug, Clone)]
pub struct DomainMask {
    mesh: Arc<Mesh>,
    active: Vec<bool>,
    measure: f64,
}

impl DomainMask {
    /// Box-boundary vertices are never active.
    pub fn new(mesh: &Arc<Mesh>, mut active: Vec<bool>) -> Result<Self> {
        if active.len() != mesh.vertex_count() {
            return Err(Error::LengthMismatch {
                expected: mesh.vertex_count(),
                actual: active.len(),
            });
        }
        for (a, d) in active.iter_mut().zip(mesh.dirichlet_flags()) {
            *a &= !*d;
        }
        let measure = Self::compute_measure(mesh, &active);
        Ok(Self {
            mesh: Arc::clone(mesh),
            active,
            measure,
        })
    }

    /// Vertices where `u > threshold`.
    pub fn from_field(u: &ScalarField, threshold: f64) -> Self {
        let active = u.values().iter().map(|x| *x > threshold).collect();
        Self::new(u.mesh(), active).expect("field length matches its mesh")
    }

    fn compute_measure(mesh: &Mesh, active: &[bool]) -> f64 {
        let k = mesh.corners_per_cell();
        let full = (0..mesh.cell_count())
            .filter(|c| mesh.cell_vertices(*c)[..k].iter().all(|v| active[*v]))
            .count();
        full as f64 * mesh.cell_volume()
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn is_active(&self, v: usize) -> bool {
        self.active[v]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Volume of the cells whose corners are all active.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn contains(&self, other: &DomainMask) -> std::result::Result<(), usize> {
        match other
            .active
            .iter()
            .zip(&self.active)
            .position(|(inner, outer)| *inner && !*outer)
        {
            Some(v) => Err(v),
            None => Ok(()),
        }
    }

    pub fn to_field(&self) -> ScalarField {
        let values = self
            .active
            .iter()
            .map(|a| if *a { 1.0 } else { 0.0 })
            .collect();
        ScalarField::from_values(&self.mesh, values).expect("mask length matches its mesh")
    }
}
