//! Structured vertex-centered grids on boxes in one or two dimensions.
//!
//! Nodes carry trapezoidal quadrature weights, fluxes live on the faces
//! between adjacent nodes. The Neumann divergence is assembled as the exact
//! negative adjoint of the face gradient, so discrete integration by parts
//! holds to rounding. The Dirichlet Laplacian uses the standard 3/5-point
//! stencil on interior nodes and backs the discrete H^-1 inner product.

use std::sync::{Arc, OnceLock};

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};

/// One face between two axis-adjacent nodes.
#[derive(Debug, Clone)]
pub struct Face {
    pub axis: usize,
    /// Node with the smaller coordinate along `axis`.
    pub lo: usize,
    pub hi: usize,
    pub midpoint: [f64; 2],
    /// Quadrature weight: `dx_axis` times the trapezoidal tangential weight.
    pub weight: f64,
}

/// Linear map from nodal values to the full gradient vector at a face.
///
/// Component `axis` is the plain difference across the face; the tangential
/// component (2D) averages the neighbouring tangential differences.
#[derive(Debug, Clone, Default)]
pub struct FaceStencil {
    pub components: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug)]
pub struct Grid {
    dim: usize,
    n: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    dx: Vec<f64>,
    boundary: Vec<bool>,
    node_weights: Vec<f64>,
    faces: Vec<Face>,
    stencils: Vec<FaceStencil>,
    interior: Vec<usize>,
    // position of each node among interior nodes, usize::MAX on the boundary
    interior_pos: Vec<usize>,
    laplace_factor: OnceLock<std::result::Result<BandLu, usize>>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.lo == other.lo && self.hi == other.hi
    }
}

/// Builds a uniform tensor grid; see [`Grid::new`].
pub fn build_grid(dim: usize, n_per_axis: &[usize], lo: &[f64], hi: &[f64]) -> Result<Arc<Grid>> {
    Grid::new(dim, n_per_axis, lo, hi).map(Arc::new)
}

impl Grid {
    pub fn new(dim: usize, n_per_axis: &[usize], lo: &[f64], hi: &[f64]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if n_per_axis.len() != dim || lo.len() != dim || hi.len() != dim {
            return Err(Error::Config(format!(
                "grid axes: expected {dim} entries for n, lo and hi"
            )));
        }
        for axis in 0..dim {
            if !(hi[axis] > lo[axis]) {
                return Err(Error::InvalidExtent { axis, lo: lo[axis], hi: hi[axis] });
            }
            if n_per_axis[axis] < 3 {
                return Err(Error::TooCoarse { axis, n: n_per_axis[axis] });
            }
        }
        let n = n_per_axis.to_vec();
        let dx: Vec<f64> = (0..dim).map(|a| (hi[a] - lo[a]) / (n[a] - 1) as f64).collect();
        let mut grid = Grid {
            dim,
            n,
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            dx,
            boundary: Vec::new(),
            node_weights: Vec::new(),
            faces: Vec::new(),
            stencils: Vec::new(),
            interior: Vec::new(),
            interior_pos: Vec::new(),
            laplace_factor: OnceLock::new(),
        };
        grid.build_metadata();
        Ok(grid)
    }

    fn build_metadata(&mut self) {
        let count = self.node_count();
        self.boundary = (0..count)
            .map(|k| {
                let idx = self.multi_index(k);
                (0..self.dim).any(|a| idx[a] == 0 || idx[a] == self.n[a] - 1)
            })
            .collect();
        self.node_weights = (0..count)
            .map(|k| {
                let idx = self.multi_index(k);
                (0..self.dim)
                    .map(|a| {
                        if idx[a] == 0 || idx[a] == self.n[a] - 1 {
                            0.5 * self.dx[a]
                        } else {
                            self.dx[a]
                        }
                    })
                    .product()
            })
            .collect();
        self.interior_pos = vec![usize::MAX; count];
        for k in 0..count {
            if !self.boundary[k] {
                self.interior_pos[k] = self.interior.len();
                self.interior.push(k);
            }
        }

        for axis in 0..self.dim {
            for k in 0..count {
                let idx = self.multi_index(k);
                if idx[axis] + 1 >= self.n[axis] {
                    continue;
                }
                let hi = k + self.stride(axis);
                let mut midpoint = self.coords(k);
                midpoint[axis] += 0.5 * self.dx[axis];
                let mut weight = self.dx[axis];
                for t in 0..self.dim {
                    if t != axis {
                        let edge = idx[t] == 0 || idx[t] == self.n[t] - 1;
                        weight *= if edge { 0.5 * self.dx[t] } else { self.dx[t] };
                    }
                }
                let stencil = self.face_stencil(axis, k, hi);
                self.faces.push(Face { axis, lo: k, hi, midpoint, weight });
                self.stencils.push(stencil);
            }
        }
    }

    fn face_stencil(&self, axis: usize, lo: usize, hi: usize) -> FaceStencil {
        let inv = 1.0 / self.dx[axis];
        let mut components = vec![Vec::new(); self.dim];
        components[axis] = vec![(lo, -inv), (hi, inv)];
        for t in 0..self.dim {
            if t == axis {
                continue;
            }
            let stride = self.stride(t);
            let mut diffs: Vec<(usize, usize)> = Vec::with_capacity(4);
            for node in [lo, hi] {
                let j = self.multi_index(node)[t];
                if j >= 1 {
                    diffs.push((node - stride, node));
                }
                if j + 1 < self.n[t] {
                    diffs.push((node, node + stride));
                }
            }
            let c = 1.0 / (self.dx[t] * diffs.len() as f64);
            let mut entries: Vec<(usize, f64)> = Vec::new();
            for (a, b) in diffs {
                for (node, v) in [(a, -c), (b, c)] {
                    match entries.iter_mut().find(|e| e.0 == node) {
                        Some(e) => e.1 += v,
                        None => entries.push((node, v)),
                    }
                }
            }
            entries.retain(|e| e.1 != 0.0);
            entries.sort_by_key(|e| e.0);
            components[t] = entries;
        }
        FaceStencil { components }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn node_count(&self) -> usize {
        self.n.iter().product()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            1
        } else {
            self.n[0]
        }
    }

    pub fn multi_index(&self, k: usize) -> [usize; 2] {
        if self.dim == 1 {
            [k, 0]
        } else {
            [k % self.n[0], k / self.n[0]]
        }
    }

    pub fn index(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] + self.n[0] * idx[1]
        }
    }

    /// Physical coordinates of axis position `i`.
    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        if i == self.n[axis] - 1 {
            self.hi[axis]
        } else {
            self.lo[axis] + i as f64 * self.dx[axis]
        }
    }

    pub fn coords(&self, k: usize) -> [f64; 2] {
        let idx = self.multi_index(k);
        let mut x = [0.0; 2];
        for (a, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = self.axis_coord(a, idx[a]);
        }
        x
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.boundary[k]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn stencils(&self) -> &[FaceStencil] {
        &self.stencils
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Neighbours of `k` including diagonals (the 3^d block minus `k`).
    pub fn ring(&self, k: usize) -> Vec<usize> {
        let idx = self.multi_index(k);
        let mut out = Vec::with_capacity(8);
        let (ylo, yhi) = if self.dim == 2 {
            (idx[1].saturating_sub(1), (idx[1] + 1).min(self.n[1] - 1))
        } else {
            (0, 0)
        };
        for j in ylo..=yhi {
            for i in idx[0].saturating_sub(1)..=(idx[0] + 1).min(self.n[0] - 1) {
                let m = self.index([i, j]);
                if m != k {
                    out.push(m);
                }
            }
        }
        out
    }

    /// Bandwidth of interior-node systems under natural ordering.
    fn interior_bandwidth(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.n[0] - 2
        }
    }

    /// Matrix of `-dirichlet_laplacian` on interior nodes (SPD).
    pub fn negative_laplacian_matrix(&self) -> BandMatrix {
        let m = self.interior.len();
        let mut a = BandMatrix::zeros(m, self.interior_bandwidth());
        for (row, &k) in self.interior.iter().enumerate() {
            for axis in 0..self.dim {
                let c = 1.0 / (self.dx[axis] * self.dx[axis]);
                a.add(row, row, 2.0 * c);
                let s = self.stride(axis);
                for nb in [k - s, k + s] {
                    let p = self.interior_pos[nb];
                    if p != usize::MAX {
                        a.add(row, p, -c);
                    }
                }
            }
        }
        a
    }

    fn laplace_lu(&self) -> Result<&BandLu> {
        self.laplace_factor
            .get_or_init(|| self.negative_laplacian_matrix().factor().map_err(|e| match e {
                Error::SingularOperator(k) => k,
                _ => usize::MAX,
            }))
            .as_ref()
            .map_err(|&k| Error::SingularOperator(k))
    }

    /// Position of node `k` among interior nodes.
    pub fn interior_position(&self, k: usize) -> Option<usize> {
        let p = self.interior_pos[k];
        (p != usize::MAX).then_some(p)
    }
}

fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Nodal values on a grid: an element of the discrete pivot space.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.node_count()] }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.node_count()] }
    }

    pub fn new(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::LengthMismatch { expected: grid.node_count(), got: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.node_count()).map(|k| f(grid.coords(k))).collect();
        Self { grid: grid.clone(), values }
    }

    pub(crate) fn from_raw(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
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

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `self + a * other`
    pub fn axpy(&self, a: f64, other: &Field) -> Field {
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect();
        Field { grid: self.grid.clone(), values }
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, a: f64) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|x| a * x).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Full gradient vectors on faces, `dim` components per face.
#[derive(Debug, Clone)]
pub struct FluxField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl FluxField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.face_count() * grid.dim()] }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Gradient vector at face `f`.
    pub fn at(&self, f: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.values[f * d..(f + 1) * d]
    }

    pub fn at_mut(&mut self, f: usize) -> &mut [f64] {
        let d = self.grid.dim();
        &mut self.values[f * d..(f + 1) * d]
    }

    /// Component normal to face `f`.
    pub fn normal(&self, f: usize) -> f64 {
        self.at(f)[self.grid.faces[f].axis]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Reconstructed gradient vector at a single face.
pub(crate) fn face_gradient(stencil: &FaceStencil, u: &[f64], out: &mut [f64]) {
    for (c, comp) in stencil.components.iter().enumerate() {
        out[c] = comp.iter().map(|&(k, w)| w * u[k]).sum();
    }
}

pub fn gradient(u: &Field) -> FluxField {
    let grid = &u.grid;
    let mut q = FluxField::zeros(grid);
    for (f, stencil) in grid.stencils.iter().enumerate() {
        face_gradient(stencil, &u.values, q.at_mut(f));
    }
    q
}

/// Negative adjoint of [`gradient`] under node/face quadrature weights.
///
/// No flux crosses the outer boundary, which realizes homogeneous Neumann
/// conditions.
pub fn divergence_neumann(q: &FluxField) -> Field {
    let grid = &q.grid;
    let mut out = vec![0.0; grid.node_count()];
    for (f, (face, stencil)) in grid.faces.iter().zip(&grid.stencils).enumerate() {
        let qf = q.at(f);
        for (c, comp) in stencil.components.iter().enumerate() {
            let wq = face.weight * qf[c];
            for &(k, w) in comp {
                out[k] += w * wq;
            }
        }
    }
    for (o, m) in out.iter_mut().zip(&grid.node_weights) {
        *o = -*o / m;
    }
    Field::from_raw(grid, out)
}

pub fn face_inner(a: &FluxField, b: &FluxField) -> Result<f64> {
    if !same_grid(&a.grid, &b.grid) {
        return Err(Error::GridMismatch);
    }
    let d = a.grid.dim();
    Ok(a.grid
        .faces
        .iter()
        .enumerate()
        .map(|(f, face)| {
            let s: f64 = (0..d).map(|c| a.values[f * d + c] * b.values[f * d + c]).sum();
            face.weight * s
        })
        .sum())
}

/// 3/5-point Laplacian with homogeneous Dirichlet values.
///
/// Boundary entries of `w` are treated as zero; boundary entries of the
/// result are zero.
pub fn dirichlet_laplacian(w: &Field) -> Field {
    let grid = &w.grid;
    let mut out = vec![0.0; grid.node_count()];
    let val = |k: usize| if grid.boundary[k] { 0.0 } else { w.values[k] };
    for &k in &grid.interior {
        let mut acc = 0.0;
        for axis in 0..grid.dim {
            let s = grid.stride(axis);
            acc += (val(k - s) - 2.0 * val(k) + val(k + s)) / (grid.dx[axis] * grid.dx[axis]);
        }
        out[k] = acc;
    }
    Field::from_raw(grid, out)
}

pub fn l2_inner(u: &Field, v: &Field) -> Result<f64> {
    u.check_same_grid(v)?;
    Ok(u.values
        .iter()
        .zip(&v.values)
        .zip(&u.grid.node_weights)
        .map(|((a, b), m)| m * a * b)
        .sum())
}

pub fn l2_norm(u: &Field) -> f64 {
    l2_inner(u, u).unwrap_or(0.0).max(0.0).sqrt()
}

pub fn l1_norm(u: &Field) -> f64 {
    u.values.iter().zip(&u.grid.node_weights).map(|(a, m)| m * a.abs()).sum()
}

/// `(-dirichlet_laplacian)^-1 v` on interior nodes, zero on the boundary.
pub fn solve_dirichlet(v: &Field) -> Result<Field> {
    let grid = &v.grid;
    let lu = grid.laplace_lu()?;
    let mut rhs: Vec<f64> = grid.interior.iter().map(|&k| v.values[k]).collect();
    lu.solve_in_place(&mut rhs);
    let mut out = vec![0.0; grid.node_count()];
    for (&k, x) in grid.interior.iter().zip(rhs) {
        out[k] = x;
    }
    Ok(Field::from_raw(grid, out))
}

pub fn hminus1_inner(u: &Field, v: &Field) -> Result<f64> {
    u.check_same_grid(v)?;
    let w = solve_dirichlet(v)?;
    l2_inner(u, &w)
}

pub fn hminus1_norm(u: &Field) -> Result<f64> {
    Ok(hminus1_inner(u, u)?.max(0.0).sqrt())
}
