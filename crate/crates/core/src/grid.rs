//! Periodic cell-centered grid on `[-pi, pi)^d` with scalar and vector fields.
//!
//! Cells are stored row-major: for `d = 2` the flat index of cell `(i0, i1)` is
//! `i0 * n + i1`, so axis 1 is contiguous. Cell `i` along an axis has its
//! center at `-pi + (i + 1/2) h` with `h = 2 pi / n`.
//!
//! Besides cell-centered fields the same storage is used for functions sampled
//! on the *displacement lattice*: entry `i` along an axis holds the value at
//! displacement `i h` wrapped into `[-pi, pi)`. Interaction kernels live on this
//! lattice so that the discrete circular convolution in [`crate::spectral`]
//! evaluates `sum_k f(x_j - z_k) g(z_k) h^d` exactly.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 2;

/// A point (or displacement) on the torus. For `d = 1` only component 0 is used
/// and component 1 is kept at zero.
pub type Point = [f64; MAX_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    dim: usize,
    n: usize,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::invalid("dim", format!("must be 1 or 2, got {dim}")));
        }
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::invalid(
                "cells",
                format!("cells per axis must be even and at least 4, got {n}"),
            ));
        }
        Ok(GridSpec { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Total number of cells, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Measure of the whole domain, `(2 pi)^d`.
    pub fn domain_volume(&self) -> f64 {
        TAU.powi(self.dim as i32)
    }

    /// Same dimension, `factor` times as many cells per axis.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        GridSpec::new(self.dim, self.n * factor)
    }

    pub fn center_coord(&self, i: usize) -> f64 {
        -PI + (i as f64 + 0.5) * self.spacing()
    }

    /// Lattice displacement for index `i` along an axis, in `[-pi, pi)`.
    pub fn displacement_coord(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i < self.n / 2 {
            i as f64 * h
        } else {
            (i as f64 - self.n as f64) * h
        }
    }

    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.n, flat % self.n],
        }
    }

    pub fn flat_index(&self, idx: [usize; MAX_DIM]) -> usize {
        match self.dim {
            1 => idx[0],
            _ => idx[0] * self.n + idx[1],
        }
    }

    pub fn cell_center(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        let mut p = [0.0; MAX_DIM];
        for (axis, c) in p.iter_mut().enumerate().take(self.dim) {
            *c = self.center_coord(idx[axis]);
        }
        p
    }

    pub fn lattice_displacement(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        let mut p = [0.0; MAX_DIM];
        for (axis, c) in p.iter_mut().enumerate().take(self.dim) {
            *c = self.displacement_coord(idx[axis]);
        }
        p
    }

    /// Flat index of the neighbor `offset` cells away along `axis`, wrapping.
    pub fn neighbor(&self, flat: usize, axis: usize, offset: isize) -> usize {
        let mut idx = self.multi_index(flat);
        let n = self.n as isize;
        idx[axis] = (idx[axis] as isize + offset).rem_euclid(n) as usize;
        self.flat_index(idx)
    }

    /// Cell containing `p` (coordinates assumed in `[-pi, pi)`).
    pub fn cell_of(&self, p: &Point) -> usize {
        let mut idx = [0usize; MAX_DIM];
        let h = self.spacing();
        for axis in 0..self.dim {
            let s = ((p[axis] + PI) / h).floor() as isize;
            idx[axis] = s.rem_euclid(self.n as isize) as usize;
        }
        self.flat_index(idx)
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{}D/{} cells vs {}D/{} cells",
                self.dim, self.n, other.dim, other.n
            )));
        }
        Ok(())
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// A real value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|c| f(&grid.cell_center(c))).collect();
        ScalarField { grid, values }
    }

    /// Samples `f` on the displacement lattice.
    pub fn from_lattice_fn(grid: GridSpec, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|c| f(&grid.lattice_displacement(c)))
            .collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
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

    /// Grid-quadrature `L^p` norm; pass `f64::INFINITY` for the sup norm.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::invalid("p", format!("norm order must be >= 1, got {p}")));
        }
        if p.is_infinite() {
            return Ok(self.sup_norm());
        }
        let dv = self.grid.cell_volume();
        let s = if p == 1.0 {
            compensated_sum(self.values.iter().map(|v| v.abs()))
        } else if p == 2.0 {
            compensated_sum(self.values.iter().map(|v| v * v))
        } else {
            compensated_sum(self.values.iter().map(|v| v.abs().powf(p)))
        };
        Ok((s * dv).powf(1.0 / p))
    }

    pub fn l2_norm(&self) -> f64 {
        let s = compensated_sum(self.values.iter().map(|v| v * v));
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Midpoint quadrature of the field over the domain.
    pub fn integrate(&self) -> f64 {
        compensated_sum(self.values.iter().copied()) * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.integrate() / self.grid.domain_volume()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn scaled(&self, k: f64) -> Self {
        self.map(|v| k * v)
    }

    /// Pointwise product `self * vf`, i.e. `psi A`.
    pub fn times_vector(&self, vf: &VectorField) -> Result<VectorField> {
        let comps = vf
            .components()
            .iter()
            .map(|c| self.zip_with(c, |a, b| a * b))
            .collect::<Result<Vec<_>>>()?;
        VectorField::from_components(comps)
    }

    /// Multilinear interpolation from the `2^d` surrounding cell centers, with
    /// periodic wrap. Reproduces fields that are linear between centers.
    pub fn interpolate(&self, p: &Point) -> f64 {
        let grid = self.grid;
        let h = grid.spacing();
        let n = grid.n() as isize;
        let mut base = [0usize; MAX_DIM];
        let mut next = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for axis in 0..grid.dim {
            let s = (p[axis] + PI) / h - 0.5;
            let fl = s.floor();
            frac[axis] = s - fl;
            base[axis] = (fl as isize).rem_euclid(n) as usize;
            next[axis] = (base[axis] + 1) % grid.n();
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << grid.dim) {
            let mut idx = [0usize; MAX_DIM];
            let mut w = 1.0;
            for axis in 0..grid.dim {
                if corner >> axis & 1 == 1 {
                    idx[axis] = next[axis];
                    w *= frac[axis];
                } else {
                    idx[axis] = base[axis];
                    w *= 1.0 - frac[axis];
                }
            }
            if w != 0.0 {
                acc += w * self.values[grid.flat_index(idx)];
            }
        }
        acc
    }

    /// Circular shift by `k` cells along `axis`: `out[i] = self[i - k]`.
    pub fn shifted(&self, axis: usize, k: isize) -> Self {
        let values = (0..self.grid.len())
            .map(|c| self.values[self.grid.neighbor(c, axis, -k)])
            .collect();
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    /// Writes `x1[,x2],value` rows in storage order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        if self.grid.dim == 1 {
            writeln!(out, "x1,value")?;
        } else {
            writeln!(out, "x1,x2,value")?;
        }
        for (c, v) in self.values.iter().enumerate() {
            let p = self.grid.cell_center(c);
            if self.grid.dim == 1 {
                writeln!(out, "{:.12e},{:.12e}", p[0], v)?;
            } else {
                writeln!(out, "{:.12e},{:.12e},{:.12e}", p[0], p[1], v)?;
            }
        }
        Ok(())
    }
}

fn elementwise(a: &ScalarField, b: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
    a.zip_with(b, f).expect("fields on different grids")
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        elementwise(self, rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        elementwise(self, rhs, |a, b| a - b)
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        elementwise(self, rhs, |a, b| a * b)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.map(|v| -v)
    }
}

/// `d` scalar components on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        VectorField {
            grid,
            components: (0..grid.dim).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    /// Spatially constant field.
    pub fn uniform(grid: GridSpec, value: Point) -> Self {
        VectorField {
            grid,
            components: (0..grid.dim)
                .map(|i| ScalarField::constant(grid, value[i]))
                .collect(),
        }
    }

    pub fn from_components(components: Vec<ScalarField>) -> Result<Self> {
        let grid = match components.first() {
            Some(c) => c.grid,
            None => return Err(Error::GridMismatch("vector field needs components".into())),
        };
        if components.len() != grid.dim {
            return Err(Error::GridMismatch(format!(
                "{} components for a {}D grid",
                components.len(),
                grid.dim
            )));
        }
        for c in &components {
            grid.check_same(&c.grid)?;
        }
        Ok(VectorField { grid, components })
    }

    /// Samples a vector function at cell centers.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&Point) -> Point) -> Self {
        let samples: Vec<Point> = (0..grid.len()).map(|c| f(&grid.cell_center(c))).collect();
        Self::from_samples(grid, &samples)
    }

    /// Samples a vector function on the displacement lattice.
    pub fn from_lattice_fn(grid: GridSpec, f: impl Fn(&Point) -> Point) -> Self {
        let samples: Vec<Point> = (0..grid.len())
            .map(|c| f(&grid.lattice_displacement(c)))
            .collect();
        Self::from_samples(grid, &samples)
    }

    fn from_samples(grid: GridSpec, samples: &[Point]) -> Self {
        let components = (0..grid.dim)
            .map(|axis| ScalarField {
                grid,
                values: samples.iter().map(|s| s[axis]).collect(),
            })
            .collect();
        VectorField { grid, components }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn at(&self, cell: usize) -> Point {
        let mut p = [0.0; MAX_DIM];
        for (axis, c) in self.components.iter().enumerate() {
            p[axis] = c.values[cell];
        }
        p
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(ScalarField::is_finite)
    }

    pub fn interpolate(&self, p: &Point) -> Point {
        let mut out = [0.0; MAX_DIM];
        for (axis, c) in self.components.iter().enumerate() {
            out[axis] = c.interpolate(p);
        }
        out
    }

    /// Largest absolute component value.
    pub fn sup_norm(&self) -> f64 {
        self.components
            .iter()
            .map(ScalarField::sup_norm)
            .fold(0.0, f64::max)
    }

    pub fn map_components(&self, f: impl Fn(&ScalarField) -> ScalarField) -> Self {
        VectorField {
            grid: self.grid,
            components: self.components.iter().map(f).collect(),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        self.map_components(|c| c.scaled(k))
    }

    pub fn add(&self, other: &VectorField) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(VectorField {
            grid: self.grid,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &VectorField) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(VectorField {
            grid: self.grid,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Pointwise dot product with another vector field.
    pub fn dot(&self, other: &VectorField) -> Result<ScalarField> {
        self.grid.check_same(&other.grid)?;
        let mut out = ScalarField::zeros(self.grid);
        for (a, b) in self.components.iter().zip(&other.components) {
            for ((o, x), y) in out.values.iter_mut().zip(&a.values).zip(&b.values) {
                *o += x * y;
            }
        }
        Ok(out)
    }
}

/// Multi-index of a Fourier mode, each entry a signed wavenumber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeIndex {
    dim: usize,
    m: [i64; MAX_DIM],
}

impl ModeIndex {
    pub fn new(dim: usize, m: [i64; MAX_DIM]) -> Self {
        let mut m = m;
        for v in m.iter_mut().skip(dim) {
            *v = 0;
        }
        ModeIndex { dim, m }
    }

    pub fn zero(dim: usize) -> Self {
        ModeIndex { dim, m: [0; MAX_DIM] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, axis: usize) -> i64 {
        self.m[axis]
    }

    pub fn is_zero(&self) -> bool {
        self.m.iter().all(|v| *v == 0)
    }

    pub fn norm_sq(&self) -> f64 {
        self.m.iter().map(|v| (v * v) as f64).sum()
    }

    pub fn norm_inf(&self) -> u64 {
        self.m.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn negated(&self) -> Self {
        ModeIndex {
            dim: self.dim,
            m: self.m.map(|v| -v),
        }
    }

    /// `m . x`.
    pub fn phase(&self, x: &Point) -> f64 {
        (0..self.dim).map(|a| self.m[a] as f64 * x[a]).sum()
    }
}

/// Central difference along `axis` with periodic wrap.
pub fn partial(field: &ScalarField, axis: usize) -> ScalarField {
    let grid = field.grid;
    let inv = 1.0 / (2.0 * grid.spacing());
    let v = &field.values;
    let values = (0..grid.len())
        .map(|c| (v[grid.neighbor(c, axis, 1)] - v[grid.neighbor(c, axis, -1)]) * inv)
        .collect();
    ScalarField { grid, values }
}

/// Second-order central-difference gradient.
pub fn gradient(field: &ScalarField) -> VectorField {
    VectorField {
        grid: field.grid,
        components: (0..field.grid.dim).map(|a| partial(field, a)).collect(),
    }
}

/// Second-order central-difference divergence.
pub fn divergence(vf: &VectorField) -> ScalarField {
    let grid = vf.grid;
    let mut out = ScalarField::zeros(grid);
    for (axis, comp) in vf.components.iter().enumerate() {
        let d = partial(comp, axis);
        for (o, v) in out.values.iter_mut().zip(d.values) {
            *o += v;
        }
    }
    out
}

/// Compact `(2d+1)`-point Laplacian.
pub fn laplacian(field: &ScalarField) -> ScalarField {
    let grid = field.grid;
    let inv = 1.0 / (grid.spacing() * grid.spacing());
    let v = &field.values;
    let values = (0..grid.len())
        .map(|c| {
            let mut acc = 0.0;
            for axis in 0..grid.dim {
                acc += v[grid.neighbor(c, axis, 1)] - 2.0 * v[c] + v[grid.neighbor(c, axis, -1)];
            }
            acc * inv
        })
        .collect();
    ScalarField { grid, values }
}

/// Checks that two fields share a grid.
pub fn ensure_same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    a.check_same(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g2(n: usize) -> GridSpec {
        GridSpec::new(2, n).unwrap()
    }

    #[test]
    fn grid_rejects_odd_or_tiny() {
        assert!(GridSpec::new(2, 7).is_err());
        assert!(GridSpec::new(2, 2).is_err());
        assert!(GridSpec::new(3, 8).is_err());
        let g = g2(50);
        assert!((g.spacing() * 50.0 - TAU).abs() < 1e-14);
        assert_eq!(g.len(), 2500);
    }

    #[test]
    fn constant_field_norms() {
        let g = g2(50);
        let one = ScalarField::constant(g, 1.0);
        assert!((one.lp_norm(2.0).unwrap() - TAU).abs() < 1e-12);
        assert_eq!(one.lp_norm(f64::INFINITY).unwrap(), 1.0);
        assert!((one.integrate() - TAU * TAU).abs() < 1e-10);
        assert!(one.lp_norm(0.5).is_err());
    }

    #[test]
    fn sine_norm_and_integral() {
        for n in [20, 50, 100] {
            let f = ScalarField::from_fn(g2(n), |p| p[0].sin());
            assert!((f.lp_norm(2.0).unwrap() - PI * 2f64.sqrt()).abs() < 1e-12);
            assert!(f.integrate().abs() < 1e-12);
        }
    }

    #[test]
    fn central_gradient_is_scaled_cosine() {
        let g = g2(32);
        let h = g.spacing();
        let f = ScalarField::from_fn(g, |p| p[0].sin());
        let grad = gradient(&f);
        let expect = ScalarField::from_fn(g, |p| p[0].cos() * h.sin() / h);
        assert!((grad.component(0) - &expect).sup_norm() < 1e-13);
        assert!(grad.component(1).sup_norm() < 1e-13);
    }

    #[test]
    fn divergence_of_constant_is_zero() {
        let g = g2(16);
        let vf = VectorField::uniform(g, [3.0, -1.5]);
        assert_eq!(divergence(&vf).sup_norm(), 0.0);
    }

    #[test]
    fn laplacian_eigenfunction() {
        let g = GridSpec::new(1, 40).unwrap();
        let h = g.spacing();
        let f = ScalarField::from_fn(g, |p| (2.0 * p[0]).cos());
        let lap = laplacian(&f);
        let factor = -4.0 * (h).sin().powi(2) / (h * h);
        let expect = f.scaled(factor);
        assert!((&lap - &expect).sup_norm() < 1e-11);
    }

    #[test]
    fn shift_and_cell_lookup() {
        let g = g2(8);
        let f = ScalarField::from_values(g, (0..64).map(|v| v as f64).collect()).unwrap();
        let s = f.shifted(0, 1);
        assert_eq!(s.values()[g.flat_index([1, 3])], f.values()[g.flat_index([0, 3])]);
        assert_eq!(s.values()[g.flat_index([0, 3])], f.values()[g.flat_index([7, 3])]);
        for c in 0..g.len() {
            assert_eq!(g.cell_of(&g.cell_center(c)), c);
        }
    }

    #[test]
    fn displacement_lattice_wraps_to_minus_pi() {
        let g = GridSpec::new(1, 8).unwrap();
        assert_eq!(g.displacement_coord(0), 0.0);
        assert!((g.displacement_coord(4) + PI).abs() < 1e-15);
        assert!((g.displacement_coord(7) + g.spacing()).abs() < 1e-15);
    }

    #[test]
    fn csv_header_and_rows() {
        let g = g2(4);
        let f = ScalarField::constant(g, 0.123456789012);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x1,x2,value"));
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        assert!((row[2] - 0.123456789012).abs() < 1e-12);
        assert_eq!(text.lines().count(), 17);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let vals = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(vals), 2.0);
    }
}
