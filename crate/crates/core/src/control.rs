//! Control synthesis: the macroscopic source `q`, the periodic Poisson solve
//! that recovers an irrotational flux `w` with `div w = -q`, the velocity
//! field `U = w / rho`, and its sampling at agent positions.

use log::warn;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{divergence, ensure_same_grid, GridSpec, ModeIndex, Point, ScalarField, VectorField, MAX_DIM};
use crate::kernels::KernelOnGrid;
use crate::micro::AgentState;
use crate::spectral::{derivative_symbol, forward, inverse_real, mode_at};

/// Relative tolerance on the mass match between current and target density.
pub const MASS_MATCH_TOL: f64 = 1e-8;

/// `|mean(q)| / ||q||_2` above which the zero mode is reported as projected.
pub const MEAN_PROJECTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlGains {
    pub kp: f64,
    /// Spectral truncation order: modes with `||m||_inf <= modes` are kept.
    pub modes: usize,
    pub density_floor: f64,
}

impl ControlGains {
    pub fn new(kp: f64, modes: usize, density_floor: f64, grid: GridSpec) -> Result<Self> {
        let gains = ControlGains {
            kp,
            modes,
            density_floor,
        };
        gains.validate(grid)?;
        Ok(gains)
    }

    /// Full band and the floor `1e-6 * mass / (2 pi)^d`.
    pub fn relative(kp: f64, grid: GridSpec, mass: f64) -> Result<Self> {
        let floor = 1e-6 * mass / grid.domain_volume();
        Self::new(kp, grid.n() / 2, floor, grid)
    }

    pub fn validate(&self, grid: GridSpec) -> Result<()> {
        if !(self.kp > 0.0 && self.kp.is_finite()) {
            return Err(Error::invalid("kp", format!("gain must be positive, got {}", self.kp)));
        }
        if self.modes == 0 || self.modes > grid.n() / 2 {
            return Err(Error::invalid(
                "modes",
                format!("truncation order {} outside 1..={}", self.modes, grid.n() / 2),
            ));
        }
        if !(self.density_floor > 0.0 && self.density_floor.is_finite()) {
            return Err(Error::invalid("density_floor", "floor must be positive"));
        }
        Ok(())
    }
}

/// Which kernel the controller may use to estimate `V^e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensingMode {
    Full,
    Limited,
}

/// `q = Kp e - div(e V^d) - div(rho V^e)` with `V^d = f * rho_d` and
/// `V^e = f * e` (full) or `f^ * e` (limited).
pub fn macroscopic_control(
    e: &ScalarField,
    rho: &ScalarField,
    rho_d: &ScalarField,
    kernel: &KernelOnGrid,
    gains: &ControlGains,
    sensing: SensingMode,
) -> Result<ScalarField> {
    let grid = e.grid();
    ensure_same_grid(&grid, &rho.grid())?;
    ensure_same_grid(&grid, &rho_d.grid())?;
    ensure_same_grid(&grid, &kernel.grid())?;
    let target = rho_d.integrate();
    let current = rho.integrate();
    if (e.integrate()).abs() > MASS_MATCH_TOL * target.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::MassMismatch { target, current });
    }
    let vd = kernel.convolve(rho_d, false)?;
    let ve = kernel.convolve(e, sensing == SensingMode::Limited)?;
    let err_flux = divergence(&e.times_vector(&vd)?);
    let interaction = divergence(&rho.times_vector(&ve)?);
    let values = e
        .values()
        .iter()
        .zip(err_flux.values())
        .zip(interaction.values())
        .map(|((e, a), b)| gains.kp * e - a - b)
        .collect();
    ScalarField::from_values(grid, values)
}

/// Spectral solution of `laplacian(phi) = q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSolution {
    grid: GridSpec,
    modes: usize,
    /// `gamma` in DFT layout (unnormalized, like the forward transform).
    spectrum: Vec<Complex64>,
    constant: f64,
    projected: bool,
}

impl SpectralSolution {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// True when `q` had a nonzero mean that was discarded.
    pub fn projected(&self) -> bool {
        self.projected
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Same solution with `phi` shifted by `c`; the flux is unaffected.
    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant = c;
        self
    }

    /// Fourier coefficient `gamma_m` of `phi`, normalized so that
    /// `phi(x) = sum_m gamma_m exp(i m.x)`. `None` outside the kept band.
    pub fn coefficient(&self, mode: ModeIndex) -> Option<Complex64> {
        let grid = self.grid;
        let n = grid.n() as i64;
        if mode.dim() != grid.dim() || mode.norm_inf() > self.modes as u64 || mode.norm_inf() > (n / 2) as u64 {
            return None;
        }
        let mut idx = [0usize; MAX_DIM];
        for (axis, slot) in idx.iter_mut().enumerate().take(grid.dim()) {
            *slot = mode.get(axis).rem_euclid(n) as usize;
        }
        let raw = self.spectrum[grid.flat_index(idx)];
        // The DFT index origin is the first cell center, not x = 0.
        let mut first = [0.0; MAX_DIM];
        for slot in first.iter_mut().take(grid.dim()) {
            *slot = grid.center_coord(0);
        }
        let phase = Complex64::from_polar(1.0, -mode.phase(&first));
        Some(raw * phase / grid.len() as f64)
    }

    /// `phi` on the cell centers, including the constant.
    pub fn potential(&self) -> ScalarField {
        let phi = inverse_real(self.grid, self.spectrum.clone());
        let c = self.constant;
        phi.map(|v| v + c)
    }

    /// `w = -grad phi`, computed from the coefficients (never from `phi`).
    pub fn flux(&self) -> VectorField {
        let grid = self.grid;
        let comps = (0..grid.dim())
            .map(|axis| {
                let spec = self
                    .spectrum
                    .iter()
                    .enumerate()
                    .map(|(c, z)| -z * derivative_symbol(grid, c, axis))
                    .collect();
                inverse_real(grid, spec)
            })
            .collect();
        VectorField::from_components(comps).expect("components share the grid")
    }
}

/// Solves `laplacian(phi) = q` mode by mode, `gamma_m = -c_m / |m|^2`, and
/// returns the irrotational flux `w = -grad phi`, so `div w = -q`.
pub fn solve_flux(q: &ScalarField, gains: &ControlGains) -> Result<(SpectralSolution, VectorField)> {
    let grid = q.grid();
    gains.validate(grid)?;
    let norm = q.l2_norm();
    let mean = q.mean();
    let projected = mean.abs() > MEAN_PROJECTION_TOL * norm;
    if projected {
        warn!("control source has mean {mean:.3e} (|q|_2 = {norm:.3e}); projecting it out");
    }
    let spectrum = forward(q)
        .into_iter()
        .enumerate()
        .map(|(c, z)| {
            let m = mode_at(grid, c);
            if m.is_zero() || m.norm_inf() > gains.modes as u64 {
                Complex64::new(0.0, 0.0)
            } else {
                -z / m.norm_sq()
            }
        })
        .collect();
    let solution = SpectralSolution {
        grid,
        modes: gains.modes,
        spectrum,
        constant: 0.0,
        projected,
    };
    let w = solution.flux();
    Ok((solution, w))
}

/// `U = w / max(rho, eps)` cellwise.
pub fn control_velocity(w: &VectorField, rho: &ScalarField, gains: &ControlGains) -> Result<VectorField> {
    ensure_same_grid(&w.grid(), &rho.grid())?;
    let eps = gains.density_floor;
    let denom: Vec<f64> = rho.values().iter().map(|r| r.max(eps)).collect();
    let comps = w
        .components()
        .iter()
        .map(|c| {
            let vals = c.values().iter().zip(&denom).map(|(a, d)| a / d).collect();
            ScalarField::from_values(c.grid(), vals)
        })
        .collect::<Result<Vec<_>>>()?;
    VectorField::from_components(comps)
}

/// `u_i = U(x_i)` by periodic multilinear interpolation.
pub fn sample_agent_inputs(u: &VectorField, agents: &AgentState) -> Result<Vec<Point>> {
    if agents.dim() != u.grid().dim() {
        return Err(Error::GridMismatch(format!(
            "agents live in {} dimensions, field in {}",
            agents.dim(),
            u.grid().dim()
        )));
    }
    Ok(agents.positions().par_iter().map(|x| u.interpolate(x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::laplacian;
    use crate::kernels::{KernelSpec, Sensing};
    use crate::spectral::{spectral_curl, spectral_divergence};
    use std::f64::consts::PI;

    fn gains(grid: GridSpec) -> ControlGains {
        ControlGains::relative(100.0, grid, 100.0).unwrap()
    }

    #[test]
    fn cosine_source_has_analytic_potential() {
        let grid = GridSpec::new(2, 50).unwrap();
        let q = ScalarField::from_fn(grid, |x| x[0].cos());
        let (sol, w) = solve_flux(&q, &gains(grid)).unwrap();
        let phi = ScalarField::from_fn(grid, |x| -x[0].cos());
        assert!((&sol.potential() - &phi).sup_norm() < 1e-10);
        let w1 = ScalarField::from_fn(grid, |x| -x[0].sin());
        assert!((w.component(0) - &w1).sup_norm() < 1e-10);
        assert!(w.component(1).sup_norm() < 1e-12);
        assert!(!sol.projected());
    }

    #[test]
    fn two_mode_source() {
        let grid = GridSpec::new(2, 50).unwrap();
        let q = ScalarField::from_fn(grid, |x| x[0].cos() + (2.0 * x[1]).cos());
        let (sol, _) = solve_flux(&q, &gains(grid)).unwrap();
        let phi = ScalarField::from_fn(grid, |x| -x[0].cos() - (2.0 * x[1]).cos() / 4.0);
        assert!((&sol.potential() - &phi).sup_norm() < 1e-10);
    }

    #[test]
    fn coefficients_are_physical() {
        let grid = GridSpec::new(2, 16).unwrap();
        let q = ScalarField::from_fn(grid, |x| x[0].cos());
        let (sol, _) = solve_flux(&q, &gains(grid)).unwrap();
        let g = sol.coefficient(ModeIndex::new(2, [1, 0])).unwrap();
        assert!((g - Complex64::new(-0.5, 0.0)).norm() < 1e-12);
        let gm = sol.coefficient(ModeIndex::new(2, [-1, 0])).unwrap();
        assert!((gm - g.conj()).norm() < 1e-12);
        assert_eq!(sol.coefficient(ModeIndex::zero(2)).unwrap(), Complex64::new(0.0, 0.0));
        assert!(sol.coefficient(ModeIndex::new(2, [9, 0])).is_none());
    }

    #[test]
    fn zero_source_gives_zero_flux() {
        let grid = GridSpec::new(1, 20).unwrap();
        let (_, w) = solve_flux(&ScalarField::zeros(grid), &gains(grid)).unwrap();
        assert_eq!(w.sup_norm(), 0.0);
    }

    #[test]
    fn nonzero_mean_is_projected() {
        let grid = GridSpec::new(1, 20).unwrap();
        let q = ScalarField::from_fn(grid, |x| 1.0 + x[0].sin());
        let (sol, w) = solve_flux(&q, &gains(grid)).unwrap();
        assert!(sol.projected());
        let back = spectral_divergence(&w);
        let expect = ScalarField::from_fn(grid, |x| -x[0].sin());
        assert!((&back - &expect).sup_norm() < 1e-12);
    }

    #[test]
    fn flux_is_gauge_independent_bitwise() {
        let grid = GridSpec::new(2, 24).unwrap();
        let q = ScalarField::from_fn(grid, |x| (x[0] + x[1]).sin() - 0.3 * (2.0 * x[1]).cos());
        let (sol, w) = solve_flux(&q, &gains(grid)).unwrap();
        let shifted = sol.clone().with_constant(17.5);
        assert_eq!(shifted.flux(), w);
        assert!((&shifted.potential() - &sol.potential()).values().iter().all(|d| (d - 17.5).abs() < 1e-12));
    }

    #[test]
    fn flux_is_irrotational_and_inverts_q() {
        let grid = GridSpec::new(2, 50).unwrap();
        let q = ScalarField::from_fn(grid, |x| (3.0 * x[0] - x[1]).cos() + 0.5 * (x[0] + 4.0 * x[1]).sin());
        let (sol, w) = solve_flux(&q, &gains(grid)).unwrap();
        assert!(spectral_curl(&w).unwrap().sup_norm() < 1e-9);
        assert!((&spectral_divergence(&w) + &q).l2_norm() <= 1e-9 * q.l2_norm());
        let res = &laplacian(&sol.potential()) - &q;
        // the compact Laplacian is second order
        assert!(res.l2_norm() < 0.05 * q.l2_norm());
    }

    #[test]
    fn truncation_drops_high_modes() {
        let grid = GridSpec::new(1, 32).unwrap();
        let q = ScalarField::from_fn(grid, |x| x[0].cos() + (10.0 * x[0]).cos());
        let g = ControlGains::new(1.0, 4, 1e-6, grid).unwrap();
        let (sol, _) = solve_flux(&q, &g).unwrap();
        let phi = ScalarField::from_fn(grid, |x| -x[0].cos());
        assert!((&sol.potential() - &phi).sup_norm() < 1e-12);
    }

    #[test]
    fn gains_validation() {
        let grid = GridSpec::new(2, 50).unwrap();
        assert!(ControlGains::new(0.0, 25, 1e-6, grid).is_err());
        assert!(ControlGains::new(1.0, 26, 1e-6, grid).is_err());
        assert!(ControlGains::new(1.0, 0, 1e-6, grid).is_err());
        assert!(ControlGains::new(1.0, 25, 0.0, grid).is_err());
        let g = ControlGains::relative(1.0, grid, 100.0).unwrap();
        assert!((g.density_floor - 1e-4 / (4.0 * PI * PI)).abs() < 1e-18);
    }

    #[test]
    fn zero_error_gives_zero_control() {
        let grid = GridSpec::new(2, 16).unwrap();
        let k = KernelOnGrid::new(&KernelSpec::default(), grid).unwrap();
        let rho = ScalarField::from_fn(grid, |x| 1.0 + 0.5 * x[0].cos());
        let q = macroscopic_control(
            &ScalarField::zeros(grid),
            &rho,
            &rho,
            &k,
            &gains(grid),
            SensingMode::Full,
        )
        .unwrap();
        assert_eq!(q.sup_norm(), 0.0);
    }

    #[test]
    fn sine_error_control_is_zero_mean() {
        let grid = GridSpec::new(2, 50).unwrap();
        let k = KernelOnGrid::new(&KernelSpec::default().with_strength(1.0), grid).unwrap();
        let rho_d = ScalarField::constant(grid, 100.0 / (4.0 * PI * PI));
        let c = 0.3;
        let rho = ScalarField::from_fn(grid, |x| rho_d.values()[0] + c * x[0].sin());
        let e = &rho_d - &rho;
        let q = macroscopic_control(&e, &rho, &rho_d, &k, &gains(grid), SensingMode::Full).unwrap();
        assert!(q.integrate().abs() < 1e-10);
        // the proportional term dominates
        let lead = e.scaled(100.0);
        assert!((&q - &lead).l2_norm() < 0.5 * lead.l2_norm());
    }

    #[test]
    fn large_radius_limited_equals_full() {
        let grid = GridSpec::new(2, 24).unwrap();
        let spec = KernelSpec::default().with_sensing(Sensing::Radius(PI * 2f64.sqrt()));
        let k = KernelOnGrid::new(&spec, grid).unwrap();
        let rho_d = ScalarField::from_fn(grid, |x| 2.0 + x[0].cos() * x[1].sin());
        let rho = ScalarField::from_fn(grid, |x| 2.0 + 0.5 * (x[0] + x[1]).sin());
        let e = &rho_d - &rho;
        let g = gains(grid);
        let a = macroscopic_control(&e, &rho, &rho_d, &k, &g, SensingMode::Full).unwrap();
        let b = macroscopic_control(&e, &rho, &rho_d, &k, &g, SensingMode::Limited).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mass_mismatch_names_both_masses() {
        let grid = GridSpec::new(1, 16).unwrap();
        let k = KernelOnGrid::new(&KernelSpec::default(), grid).unwrap();
        let rho_d = ScalarField::constant(grid, 1.0);
        let rho = ScalarField::constant(grid, 1.5);
        let e = &rho_d - &rho;
        match macroscopic_control(&e, &rho, &rho_d, &k, &gains(grid), SensingMode::Full) {
            Err(Error::MassMismatch { target, current }) => {
                assert!((target - 2.0 * PI).abs() < 1e-12);
                assert!((current - 3.0 * PI).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn control_velocity_floor() {
        let grid = GridSpec::new(1, 4).unwrap();
        let g = ControlGains::new(1.0, 2, 1e-3, grid).unwrap();
        let w = VectorField::uniform(grid, [2.0, 0.0]);
        let rho = ScalarField::from_values(grid, vec![0.0, 4.0, 2.0, 1.0]).unwrap();
        let u = control_velocity(&w, &rho, &g).unwrap();
        assert_eq!(u.component(0).values(), &[2000.0, 0.5, 1.0, 2.0]);
    }

    #[test]
    fn sampling_at_centers_and_midpoints() {
        let grid = GridSpec::new(1, 8).unwrap();
        let u = VectorField::from_components(vec![ScalarField::from_fn(grid, |x| x[0].sin())]).unwrap();
        let c3 = grid.cell_center(3);
        let mid = [0.5 * (grid.cell_center(3)[0] + grid.cell_center(4)[0]), 0.0];
        let agents = AgentState::new(1, vec![c3, mid]).unwrap();
        let s = sample_agent_inputs(&u, &agents).unwrap();
        assert_eq!(s[0][0], u.component(0).values()[3]);
        let mean = 0.5 * (u.component(0).values()[3] + u.component(0).values()[4]);
        assert!((s[1][0] - mean).abs() < 1e-15);
    }
}
