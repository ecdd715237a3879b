//! FFT-backed operators on the torus grid: circular convolution and spectral
//! derivatives.
//!
//! Transforms use the plain DFT layout of the cell array. Derivatives only need
//! `i m` multipliers, which are insensitive to the half-cell origin offset, so
//! no phase correction is applied here. The Nyquist wavenumber has no odd
//! derivative on the grid and its derivative coefficient is set to zero.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, GridSpec, ModeIndex, ScalarField, VectorField, MAX_DIM};

type PlanCache = HashMap<(usize, bool), Arc<dyn Fft<f64>>>;

thread_local! {
    static PLANS: RefCell<PlanCache> = RefCell::new(HashMap::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry((n, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

fn transform(grid: GridSpec, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let fft = plan(n, inverse);
    match grid.dim() {
        1 => fft.process(data),
        _ => {
            // axis 1 rows are contiguous
            fft.process(data);
            let mut column = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    column[i] = data[i * n + j];
                }
                fft.process(&mut column);
                for i in 0..n {
                    data[i * n + j] = column[i];
                }
            }
        }
    }
}

/// Unnormalized forward DFT of a real field.
pub fn forward(field: &ScalarField) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = field
        .values()
        .iter()
        .map(|v| Complex64::new(*v, 0.0))
        .collect();
    transform(field.grid(), &mut data, false);
    data
}

/// Inverse DFT (normalized by `1/n^d`), keeping the real part.
pub fn inverse_real(grid: GridSpec, mut data: Vec<Complex64>) -> ScalarField {
    transform(grid, &mut data, true);
    let scale = 1.0 / grid.len() as f64;
    let values = data.iter().map(|z| z.re * scale).collect();
    ScalarField::from_values(grid, values).expect("spectrum length matches grid")
}

/// Signed wavenumber for DFT index `k`, in `[-n/2, n/2)`.
pub fn wavenumber(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Mode of the DFT entry stored at `flat`.
pub fn mode_at(grid: GridSpec, flat: usize) -> ModeIndex {
    let idx = grid.multi_index(flat);
    let mut m = [0i64; MAX_DIM];
    for axis in 0..grid.dim() {
        m[axis] = wavenumber(idx[axis], grid.n());
    }
    ModeIndex::new(grid.dim(), m)
}

/// Multiplier of the first derivative along `axis` for the mode at `flat`.
pub(crate) fn derivative_symbol(grid: GridSpec, flat: usize, axis: usize) -> Complex64 {
    let k = grid.multi_index(flat)[axis];
    if 2 * k == grid.n() {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, wavenumber(k, grid.n()) as f64)
    }
}

pub(crate) fn differentiate_spectrum(grid: GridSpec, spectrum: &[Complex64], axis: usize) -> Vec<Complex64> {
    spectrum
        .iter()
        .enumerate()
        .map(|(c, z)| z * derivative_symbol(grid, c, axis))
        .collect()
}

/// Spectral partial derivative along `axis`.
pub fn spectral_partial(field: &ScalarField, axis: usize) -> ScalarField {
    let grid = field.grid();
    let spec = forward(field);
    inverse_real(grid, differentiate_spectrum(grid, &spec, axis))
}

pub fn spectral_gradient(field: &ScalarField) -> VectorField {
    let grid = field.grid();
    let spec = forward(field);
    let comps = (0..grid.dim())
        .map(|a| inverse_real(grid, differentiate_spectrum(grid, &spec, a)))
        .collect();
    VectorField::from_components(comps).expect("components share the grid")
}

pub fn spectral_divergence(vf: &VectorField) -> ScalarField {
    let grid = vf.grid();
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (axis, comp) in vf.components().iter().enumerate() {
        let spec = forward(comp);
        for (c, (a, z)) in acc.iter_mut().zip(spec).enumerate() {
            *a += z * derivative_symbol(grid, c, axis);
        }
    }
    inverse_real(grid, acc)
}

/// Scalar curl `d w2/dx1 - d w1/dx2` of a 2D field, computed spectrally.
pub fn spectral_curl(vf: &VectorField) -> Result<ScalarField> {
    let grid = vf.grid();
    if grid.dim() != 2 {
        return Err(Error::invalid("dim", "scalar curl needs a 2D field"));
    }
    let s1 = forward(vf.component(0));
    let s2 = forward(vf.component(1));
    let acc = (0..grid.len())
        .map(|c| s2[c] * derivative_symbol(grid, c, 0) - s1[c] * derivative_symbol(grid, c, 1))
        .collect();
    Ok(inverse_real(grid, acc))
}

/// Discrete circular convolution `out[j] = h^d sum_k f[j - k] g[k]`.
///
/// With `f` sampled on the displacement lattice and `g` at cell centers this
/// is the midpoint rule for `int f(x_j - z) g(z) dz`.
pub fn circular_convolve(f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    ensure_same_grid(&f.grid(), &g.grid())?;
    let grid = f.grid();
    let sf = forward(f);
    let sg = forward(g);
    Ok(convolve_spectra(grid, &sf, &sg))
}

pub(crate) fn convolve_spectra(grid: GridSpec, sf: &[Complex64], sg: &[Complex64]) -> ScalarField {
    let dv = grid.cell_volume();
    let prod = sf.iter().zip(sg).map(|(a, b)| a * b * dv).collect();
    inverse_real(grid, prod)
}

/// A field whose spectrum has been computed once for repeated convolutions.
#[derive(Debug, Clone)]
pub struct PreparedKernel {
    grid: GridSpec,
    spectrum: Vec<Complex64>,
}

impl PreparedKernel {
    pub fn new(field: &ScalarField) -> Self {
        PreparedKernel {
            grid: field.grid(),
            spectrum: forward(field),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn convolve(&self, g: &ScalarField) -> Result<ScalarField> {
        ensure_same_grid(&self.grid, &g.grid())?;
        Ok(convolve_spectra(self.grid, &self.spectrum, &forward(g)))
    }

    pub(crate) fn convolve_spectrum(&self, sg: &[Complex64]) -> ScalarField {
        convolve_spectra(self.grid, &self.spectrum, sg)
    }
}
