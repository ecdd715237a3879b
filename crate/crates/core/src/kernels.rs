//! Interaction kernels, the von Mises target density, and kernel-density
//! estimation of the agent positions.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{compensated_sum, GridSpec, Point, ScalarField, VectorField, MAX_DIM};
use crate::micro::AgentState;
use crate::spectral::PreparedKernel;

/// Kernel magnitude below which the kernel counts as vanished.
const SUPPORT_THRESHOLD: f64 = 1e-12;

/// Image copies summed per side and axis in the wrapped Gaussian.
const KDE_IMAGES: i32 = 3;

/// Wraps an angle into the half-open interval `[-pi, pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    let w = x - TAU * ((x + PI) / TAU).floor();
    if w >= PI {
        w - TAU
    } else if w < -PI {
        w + TAU
    } else {
        w
    }
}

/// Wraps every used coordinate of `p` into `[-pi, pi)`.
pub fn wrap_point(p: &Point, dim: usize) -> Point {
    let mut out = [0.0; MAX_DIM];
    for axis in 0..dim {
        out[axis] = wrap_angle(p[axis]);
    }
    out
}

/// Principal-value displacement `a - b` on the torus.
pub fn wrapped_displacement(a: &Point, b: &Point, dim: usize) -> Point {
    let mut out = [0.0; MAX_DIM];
    for axis in 0..dim {
        out[axis] = wrap_angle(a[axis] - b[axis]);
    }
    out
}

fn norm(z: &Point, dim: usize) -> f64 {
    z[..dim].iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// `f(z) = s z exp(-|z|^2 / (2 l^2))` on wrapped displacements.
    WrappedGaussianRepulsive,
    /// `f_i(z) = s sin(z_i)`; smooth and exactly periodic, ignores the length scale.
    SineRepulsive,
}

impl KernelFamily {
    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "wrapped-gaussian-repulsive" => Ok(KernelFamily::WrappedGaussianRepulsive),
            "sine-repulsive" => Ok(KernelFamily::SineRepulsive),
            other => Err(Error::invalid("kernel_family", format!("unknown family `{other}`"))),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            KernelFamily::WrappedGaussianRepulsive => "wrapped-gaussian-repulsive",
            KernelFamily::SineRepulsive => "sine-repulsive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sensing {
    Unlimited,
    Radius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub strength: f64,
    pub length_scale: f64,
    pub sensing: Sensing,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            family: KernelFamily::WrappedGaussianRepulsive,
            strength: 0.01,
            length_scale: 0.5,
            sensing: Sensing::Unlimited,
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.strength > 0.0 && self.strength.is_finite()) {
            return Err(Error::invalid("kernel_strength", "must be positive"));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::invalid("kernel_length", "must be positive"));
        }
        if let Sensing::Radius(r) = self.sensing {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::invalid("sensing_radius", "must be a finite non-negative radius"));
            }
        }
        Ok(())
    }

    pub fn with_sensing(mut self, sensing: Sensing) -> Self {
        self.sensing = sensing;
        self
    }

    pub fn with_strength(mut self, strength: f64) -> Self {
        self.strength = strength;
        self
    }

    /// Radius beyond which `|f| <= 1e-12` everywhere.
    pub fn support_radius(&self, dim: usize) -> f64 {
        match self.family {
            KernelFamily::SineRepulsive => PI * (dim as f64).sqrt(),
            KernelFamily::WrappedGaussianRepulsive => {
                let l = self.length_scale;
                let mag = |r: f64| self.strength * r * (-r * r / (2.0 * l * l)).exp();
                // |f| is decreasing in r beyond the peak at r = l
                if mag(l) <= SUPPORT_THRESHOLD {
                    return 0.0;
                }
                let (mut lo, mut hi) = (l, l);
                while mag(hi) > SUPPORT_THRESHOLD {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mag(mid) > SUPPORT_THRESHOLD {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    }

    /// Whether the sensing ball covers everything the kernel can see.
    ///
    /// True for unlimited sensing, for `radius >= pi sqrt(d)`, and for
    /// `radius >= pi` when the kernel's effective support fits in the ball.
    pub fn is_full_sensing(&self, dim: usize) -> bool {
        match self.sensing {
            Sensing::Unlimited => true,
            Sensing::Radius(r) => {
                r >= PI * (dim as f64).sqrt() || (r >= PI && self.support_radius(dim) <= r)
            }
        }
    }

    fn eval_full(&self, z: &Point, dim: usize) -> Point {
        let mut out = [0.0; MAX_DIM];
        match self.family {
            KernelFamily::WrappedGaussianRepulsive => {
                let r2: f64 = z[..dim].iter().map(|v| v * v).sum();
                let l = self.length_scale;
                let w = (-r2 / (2.0 * l * l)).exp();
                for axis in 0..dim {
                    out[axis] = self.strength * (z[axis] * w);
                }
            }
            KernelFamily::SineRepulsive => {
                for axis in 0..dim {
                    out[axis] = self.strength * z[axis].sin();
                }
            }
        }
        out
    }

    /// Diagonal derivatives `d f_i / d z_i` of the untruncated kernel.
    fn eval_diagonal_derivative(&self, z: &Point, dim: usize) -> Point {
        let mut out = [0.0; MAX_DIM];
        match self.family {
            KernelFamily::WrappedGaussianRepulsive => {
                let r2: f64 = z[..dim].iter().map(|v| v * v).sum();
                let l2 = self.length_scale * self.length_scale;
                let w = (-r2 / (2.0 * l2)).exp();
                for axis in 0..dim {
                    out[axis] = self.strength * w * (1.0 - z[axis] * z[axis] / l2);
                }
            }
            KernelFamily::SineRepulsive => {
                for axis in 0..dim {
                    out[axis] = self.strength * z[axis].cos();
                }
            }
        }
        out
    }
}

/// Evaluates `f(z)`, or the sensing-truncated `f^(z)` when `truncated` is set.
/// The displacement is wrapped first, so the result is periodic in `z`.
pub fn eval_kernel(spec: &KernelSpec, z: &Point, dim: usize, truncated: bool) -> Point {
    let z = wrap_point(z, dim);
    if truncated && !spec.is_full_sensing(dim) {
        if let Sensing::Radius(r) = spec.sensing {
            if norm(&z, dim) > r {
                return [0.0; MAX_DIM];
            }
        }
    }
    spec.eval_full(&z, dim)
}

/// Kernel components sampled on the displacement lattice with their spectra
/// ready for convolution.
#[derive(Debug, Clone)]
pub struct KernelOnGrid {
    spec: KernelSpec,
    grid: GridSpec,
    full: VectorField,
    full_prepared: Vec<PreparedKernel>,
    truncated: Option<(VectorField, Vec<PreparedKernel>)>,
}

impl KernelOnGrid {
    pub fn new(spec: &KernelSpec, grid: GridSpec) -> Result<Self> {
        spec.validate()?;
        let dim = grid.dim();
        let full = VectorField::from_lattice_fn(grid, |z| eval_kernel(spec, z, dim, false));
        let full_prepared = full.components().iter().map(PreparedKernel::new).collect();
        let truncated = if spec.is_full_sensing(dim) {
            None
        } else {
            let t = VectorField::from_lattice_fn(grid, |z| eval_kernel(spec, z, dim, true));
            let p = t.components().iter().map(PreparedKernel::new).collect();
            Some((t, p))
        };
        Ok(KernelOnGrid {
            spec: *spec,
            grid,
            full,
            full_prepared,
            truncated,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Lattice samples of `f` (or `f^`).
    pub fn field(&self, truncated: bool) -> &VectorField {
        match (&self.truncated, truncated) {
            (Some((t, _)), true) => t,
            _ => &self.full,
        }
    }

    fn prepared(&self, truncated: bool) -> &[PreparedKernel] {
        match (&self.truncated, truncated) {
            (Some((_, p)), true) => p,
            _ => &self.full_prepared,
        }
    }

    /// Componentwise circular convolution `f * density`.
    pub fn convolve(&self, density: &ScalarField, truncated: bool) -> Result<VectorField> {
        let spectrum = crate::spectral::forward(density);
        crate::grid::ensure_same_grid(&self.grid, &density.grid())?;
        let comps = self
            .prepared(truncated)
            .iter()
            .map(|k| k.convolve_spectrum(&spectrum))
            .collect();
        VectorField::from_components(comps)
    }
}

/// `g = f^ - f` on the displacement lattice together with `d g_i / d x_i`.
#[derive(Debug, Clone)]
pub struct KernelDifference {
    pub g: VectorField,
    pub diagonal_derivatives: Vec<ScalarField>,
}

/// Builds the kernel difference fields.
///
/// `g` jumps across the sensing sphere; `d g_i / d x_i` is the pointwise
/// derivative away from that sphere, `-d f_i / d z_i` outside the ball and
/// zero inside, so its norm converges under refinement.
pub fn kernel_difference_fields(spec: &KernelSpec, grid: GridSpec) -> Result<KernelDifference> {
    spec.validate()?;
    let dim = grid.dim();
    if spec.is_full_sensing(dim) {
        return Ok(KernelDifference {
            g: VectorField::zeros(grid),
            diagonal_derivatives: vec![ScalarField::zeros(grid); dim],
        });
    }
    let radius = match spec.sensing {
        Sensing::Radius(r) => r,
        Sensing::Unlimited => unreachable!("unlimited sensing is full sensing"),
    };
    let g = VectorField::from_lattice_fn(grid, |z| {
        let t = eval_kernel(spec, z, dim, true);
        let f = eval_kernel(spec, z, dim, false);
        let mut out = [0.0; MAX_DIM];
        for a in 0..dim {
            out[a] = t[a] - f[a];
        }
        out
    });
    let derivs = VectorField::from_lattice_fn(grid, |z| {
        let z = wrap_point(z, dim);
        let mut out = [0.0; MAX_DIM];
        if norm(&z, dim) > radius {
            let d = spec.eval_diagonal_derivative(&z, dim);
            for a in 0..dim {
                out[a] = -d[a];
            }
        }
        out
    });
    Ok(KernelDifference {
        g,
        diagonal_derivatives: derivs.components().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetDensitySpec {
    pub concentration: f64,
    pub center: Point,
    pub mass: f64,
}

impl Default for TargetDensitySpec {
    fn default() -> Self {
        TargetDensitySpec {
            concentration: 4.0,
            center: [0.0; MAX_DIM],
            mass: 100.0,
        }
    }
}

/// Product von Mises density normalized on the grid to carry `spec.mass`.
pub fn von_mises_target(spec: &TargetDensitySpec, grid: GridSpec) -> Result<ScalarField> {
    if !(spec.concentration >= 0.0 && spec.concentration.is_finite()) {
        return Err(Error::invalid("target_kappa", "concentration must be >= 0"));
    }
    if !(spec.mass > 0.0 && spec.mass.is_finite()) {
        return Err(Error::invalid("mass", "total mass must be positive"));
    }
    let dim = grid.dim();
    let k = spec.concentration;
    // shift the exponent by its maximum, k * d
    let raw = ScalarField::from_fn(grid, |x| {
        let s: f64 = (0..dim).map(|a| (x[a] - spec.center[a]).cos() - 1.0).sum();
        (k * s).exp()
    });
    let total = raw.integrate();
    Ok(raw.scaled(spec.mass / total))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeSpec {
    pub bandwidth: f64,
    pub agent_mass: f64,
}

impl Default for KdeSpec {
    fn default() -> Self {
        KdeSpec {
            bandwidth: 0.3,
            agent_mass: 1.0,
        }
    }
}

impl KdeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::invalid("kde_bandwidth", "must be positive"));
        }
        if !(self.agent_mass > 0.0 && self.agent_mass.is_finite()) {
            return Err(Error::invalid("agent_mass", "must be positive"));
        }
        Ok(())
    }
}

/// Wrapped Gaussian profile of one agent along one axis, normalized so its
/// grid quadrature is exactly one.
fn axis_profile(grid: GridSpec, coord: f64, sigma: f64) -> Vec<f64> {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut prof: Vec<f64> = (0..grid.n())
        .map(|j| {
            let d = wrap_angle(grid.center_coord(j) - coord);
            (-KDE_IMAGES..=KDE_IMAGES)
                .map(|k| {
                    let s = d + TAU * k as f64;
                    (-s * s * inv).exp()
                })
                .sum()
        })
        .collect();
    let norm = compensated_sum(prof.iter().copied()) * grid.spacing();
    for v in prof.iter_mut() {
        *v /= norm;
    }
    prof
}

fn accumulate(grid: GridSpec, positions: &[Point], spec: &KdeSpec, out: &mut [f64]) {
    let n = grid.n();
    for p in positions {
        let a0 = axis_profile(grid, p[0], spec.bandwidth);
        if grid.dim() == 1 {
            for (o, v) in out.iter_mut().zip(&a0) {
                *o += spec.agent_mass * v;
            }
        } else {
            let a1 = axis_profile(grid, p[1], spec.bandwidth);
            for (i, row) in out.chunks_mut(n).enumerate() {
                let w = spec.agent_mass * a0[i];
                for (o, v) in row.iter_mut().zip(&a1) {
                    *o += w * v;
                }
            }
        }
    }
}

/// Default number of agents per parallel partition in [`kde_density`].
pub const KDE_CHUNK: usize = 64;

/// Density estimate of the swarm with a periodic Gaussian kernel.
pub fn kde_density(agents: &AgentState, spec: &KdeSpec, grid: GridSpec) -> Result<ScalarField> {
    kde_density_partitioned(agents, spec, grid, KDE_CHUNK)
}

/// As [`kde_density`] with an explicit partition size. Partials are summed in
/// partition order, so the result is deterministic for a given chunk size.
pub fn kde_density_partitioned(
    agents: &AgentState,
    spec: &KdeSpec,
    grid: GridSpec,
    chunk: usize,
) -> Result<ScalarField> {
    spec.validate()?;
    if agents.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "{}D agents on a {}D grid",
            agents.dim(),
            grid.dim()
        )));
    }
    let partials: Vec<Vec<f64>> = agents
        .positions()
        .par_chunks(chunk.max(1))
        .map(|part| {
            let mut acc = vec![0.0; grid.len()];
            accumulate(grid, part, spec, &mut acc);
            acc
        })
        .collect();
    let mut values = vec![0.0; grid.len()];
    for (c, v) in values.iter_mut().enumerate() {
        *v = compensated_sum(partials.iter().map(|p| p[c]));
    }
    ScalarField::from_values(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_examples() {
        let d = wrapped_displacement(&[3.0, 0.0], &[-3.0, 0.0], 1);
        assert!((d[0] - (6.0 - TAU)).abs() < 1e-15);
        assert_eq!(wrapped_displacement(&[1.0, 2.0], &[1.0, 2.0], 2), [0.0, 0.0]);
        let d = wrapped_displacement(&[0.1, 0.0], &[0.0, 0.0], 2);
        assert!((d[0] - 0.1).abs() < 1e-15 && d[1] == 0.0);
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
    }

    #[test]
    fn kernel_zero_at_origin_and_outside_ball() {
        let spec = KernelSpec::default().with_sensing(Sensing::Radius(0.5));
        assert_eq!(eval_kernel(&spec, &[0.0, 0.0], 2, false), [0.0, 0.0]);
        assert_eq!(eval_kernel(&spec, &[0.51, 0.0], 2, true), [0.0, 0.0]);
        assert_ne!(eval_kernel(&spec, &[0.51, 0.0], 2, false), [0.0, 0.0]);
    }

    #[test]
    fn repulsive_sign() {
        // agent at +0.2 relative to its neighbor is pushed further in +x
        let f = eval_kernel(&KernelSpec::default(), &[0.2, 0.0], 2, false);
        assert!(f[0] > 0.0);
    }

    #[test]
    fn full_sensing_rules() {
        let spec = KernelSpec::default();
        assert!(spec.with_sensing(Sensing::Radius(PI * 2f64.sqrt())).is_full_sensing(2));
        assert!(!spec.with_sensing(Sensing::Radius(0.1 * PI)).is_full_sensing(2));
        // support of the l = 0.5 Gaussian reaches past pi
        assert!(spec.support_radius(2) > PI);
        assert!(!spec.with_sensing(Sensing::Radius(PI)).is_full_sensing(2));
        let narrow = KernelSpec {
            length_scale: 0.2,
            ..spec
        };
        assert!(narrow.support_radius(2) < PI);
        assert!(narrow.with_sensing(Sensing::Radius(PI)).is_full_sensing(2));
    }

    #[test]
    fn difference_vanishes_for_unlimited_and_is_minus_f_for_zero_radius() {
        let grid = GridSpec::new(2, 16).unwrap();
        let spec = KernelSpec::default();
        let d = kernel_difference_fields(&spec, grid).unwrap();
        assert_eq!(d.g.sup_norm(), 0.0);
        let zero = spec.with_sensing(Sensing::Radius(0.0));
        let d = kernel_difference_fields(&zero, grid).unwrap();
        let onk = KernelOnGrid::new(&spec, grid).unwrap();
        let sum = d.g.add(onk.field(false)).unwrap();
        assert!(sum.sup_norm() < 1e-15);
    }

    #[test]
    fn von_mises_basics() {
        let grid = GridSpec::new(2, 50).unwrap();
        let flat = von_mises_target(
            &TargetDensitySpec {
                concentration: 0.0,
                ..Default::default()
            },
            grid,
        )
        .unwrap();
        let u = 100.0 / (TAU * TAU);
        assert!(flat.values().iter().all(|v| (v - u).abs() < 1e-12));
        let vm = von_mises_target(&TargetDensitySpec::default(), grid).unwrap();
        assert!((vm.integrate() - 100.0).abs() < 1e-10);
        assert!(vm.min() > 0.0);
        // n = 50 puts the origin on a cell corner; the mode sits in an adjacent cell
        let c = grid.cell_center(vm.argmax());
        assert!(c[0].abs() < grid.spacing() && c[1].abs() < grid.spacing());
        let off = TargetDensitySpec {
            center: [1.0, -2.0],
            ..Default::default()
        };
        let vm = von_mises_target(&off, grid).unwrap();
        assert_eq!(vm.argmax(), grid.cell_of(&[1.0, -2.0]));
        assert!(von_mises_target(
            &TargetDensitySpec {
                concentration: -1.0,
                ..Default::default()
            },
            grid
        )
        .is_err());
    }

    #[test]
    fn kde_rejects_bad_bandwidth() {
        let grid = GridSpec::new(2, 8).unwrap();
        let agents = AgentState::new(2, vec![[0.0, 0.0]]).unwrap();
        let spec = KdeSpec {
            bandwidth: 0.0,
            agent_mass: 1.0,
        };
        assert!(kde_density(&agents, &spec, grid).is_err());
    }

    #[test]
    fn single_agent_kde() {
        let grid = GridSpec::new(2, 50).unwrap();
        let agents = AgentState::new(2, vec![[0.0, 0.0]]).unwrap();
        let rho = kde_density(&agents, &KdeSpec::default(), grid).unwrap();
        assert!((rho.integrate() - 1.0).abs() < 1e-12);
        assert!(rho.min() > 0.0);
        let c = grid.cell_center(rho.argmax());
        assert!(c[0].abs() < grid.spacing() && c[1].abs() < grid.spacing());
    }
}
