//! Continuum level: convolution velocity fields and the local Lax-Friedrichs
//! (Rusanov) finite-volume integrator for `rho_t + div(rho v) = q`.

use log::warn;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, GridSpec, ScalarField, VectorField};
use crate::kernels::KernelOnGrid;

/// Floor that negative cells are clipped to.
pub const NEGATIVE_FLOOR: f64 = 1e-12;

/// CFL number above which a step logs a warning.
pub const CFL_WARN: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub density: ScalarField,
    pub time: f64,
}

impl MacroState {
    pub fn new(density: ScalarField) -> Self {
        MacroState { density, time: 0.0 }
    }

    pub fn grid(&self) -> GridSpec {
        self.density.grid()
    }

    pub fn mass(&self) -> f64 {
        self.density.integrate()
    }
}

/// `V = f * rho` (or `f^ * rho`), one convolution per component.
pub fn interaction_velocity(
    density: &ScalarField,
    kernel: &KernelOnGrid,
    truncated: bool,
) -> Result<VectorField> {
    kernel.convolve(density, truncated)
}

/// `dt / h * sum_i max |v_i|`; the unsplit scheme stays positive for values <= 1.
pub fn cfl_number(velocity: &VectorField, dt: f64) -> f64 {
    let h = velocity.grid().spacing();
    let s: f64 = velocity.components().iter().map(ScalarField::sup_norm).sum();
    dt * s / h
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    pub cfl: f64,
    pub clipped_cells: usize,
    /// `mass(next) - mass(prev) - dt * integrate(q)`.
    pub mass_residual: f64,
}

/// One conservative Rusanov step followed by the forward-Euler source `dt q`.
pub fn lax_friedrichs_step(
    state: &MacroState,
    velocity: &VectorField,
    source: &ScalarField,
    dt: f64,
) -> Result<(MacroState, StepReport)> {
    let grid = state.grid();
    ensure_same_grid(&grid, &velocity.grid())?;
    ensure_same_grid(&grid, &source.grid())?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "time step must be positive"));
    }
    let cfl = cfl_number(velocity, dt);
    if !cfl.is_finite() {
        return Err(Error::NonFiniteState {
            step: 0,
            what: "velocity field".into(),
        });
    }
    if cfl > 1.0 {
        return Err(Error::CflExceeded {
            cfl,
            admissible_dt: dt / cfl,
        });
    }
    if cfl > CFL_WARN {
        warn!("CFL number {cfl:.3} above {CFL_WARN}");
    }

    let rho = state.density.values();
    let lambda = dt / grid.spacing();
    let mut next = rho.to_vec();
    let mut flux = vec![0.0; grid.len()];
    for (axis, comp) in velocity.components().iter().enumerate() {
        let v = comp.values();
        // flux[c] lives on the face between c and its + neighbor
        for (c, f) in flux.iter_mut().enumerate() {
            let r = grid.neighbor(c, axis, 1);
            let (vl, vr) = (v[c], v[r]);
            let alpha = vl.abs().max(vr.abs());
            *f = 0.5 * (rho[c] * vl + rho[r] * vr) - 0.5 * alpha * (rho[r] - rho[c]);
        }
        for (c, out) in next.iter_mut().enumerate() {
            let l = grid.neighbor(c, axis, -1);
            *out -= lambda * (flux[c] - flux[l]);
        }
    }
    for (out, q) in next.iter_mut().zip(source.values()) {
        *out += dt * q;
    }
    let clipped_cells = clip_negative(&mut next);

    let density = ScalarField::from_values(grid, next)?;
    let mass_residual = density.integrate() - state.density.integrate() - dt * source.integrate();
    Ok((
        MacroState {
            density,
            time: state.time + dt,
        },
        StepReport {
            cfl,
            clipped_cells,
            mass_residual,
        },
    ))
}

/// Raises negative cells to [`NEGATIVE_FLOOR`] and takes the added mass back
/// from the positive cells in proportion to their content.
fn clip_negative(values: &mut [f64]) -> usize {
    let mut deficit = 0.0;
    let mut clipped = 0;
    for v in values.iter_mut() {
        if *v < 0.0 {
            deficit += NEGATIVE_FLOOR - *v;
            *v = NEGATIVE_FLOOR;
            clipped += 1;
        }
    }
    if clipped == 0 {
        return 0;
    }
    let positive: f64 = values.iter().filter(|v| **v > NEGATIVE_FLOOR).sum();
    if positive > deficit {
        let k = 1.0 - deficit / positive;
        for v in values.iter_mut().filter(|v| **v > NEGATIVE_FLOOR) {
            *v *= k;
        }
    }
    clipped
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TransportReport {
    pub substeps: usize,
    pub max_cfl: f64,
    pub clipped_cells: usize,
    pub mass_residual: f64,
}

/// Advances by `dt` holding `velocity` and `source` fixed, splitting into
/// equal substeps so each has CFL number at most `target_cfl`.
pub fn advance_subcycled(
    state: &MacroState,
    velocity: &VectorField,
    source: &ScalarField,
    dt: f64,
    target_cfl: f64,
) -> Result<(MacroState, TransportReport)> {
    let cfl = cfl_number(velocity, dt);
    if !cfl.is_finite() {
        return Err(Error::NonFiniteState {
            step: 0,
            what: "velocity field".into(),
        });
    }
    let substeps = if cfl > target_cfl {
        (cfl / target_cfl).ceil() as usize
    } else {
        1
    };
    let sub_dt = dt / substeps as f64;
    let mut current = state.clone();
    let mut report = TransportReport {
        substeps,
        ..Default::default()
    };
    for _ in 0..substeps {
        let (next, r) = lax_friedrichs_step(&current, velocity, source, sub_dt)?;
        report.max_cfl = report.max_cfl.max(r.cfl);
        report.clipped_cells += r.clipped_cells;
        report.mass_residual += r.mass_residual;
        current = next;
    }
    current.time = state.time + dt;
    Ok((current, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// The target density is held fixed.
    Static,
    /// The target follows its own interaction dynamics `rho_t + div(rho V^d) = 0`.
    Evolving,
}

/// Advances the target density; a no-op in static mode. The evolving target
/// is subcycled like the controlled density.
pub fn reference_step(
    target: &MacroState,
    kernel: &KernelOnGrid,
    dt: f64,
    mode: TargetMode,
) -> Result<MacroState> {
    match mode {
        TargetMode::Static => Ok(MacroState {
            density: target.density.clone(),
            time: target.time + dt,
        }),
        TargetMode::Evolving => {
            let vd = interaction_velocity(&target.density, kernel, false)?;
            let zero = ScalarField::zeros(target.grid());
            advance_subcycled(target, &vd, &zero, dt, CFL_WARN).map(|(s, _)| s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    #[test]
    fn constant_state_is_a_fixed_point() {
        let grid = GridSpec::new(2, 20).unwrap();
        let s = MacroState::new(ScalarField::constant(grid, 2.5));
        let (next, rep) = lax_friedrichs_step(
            &s,
            &VectorField::zeros(grid),
            &ScalarField::zeros(grid),
            0.01,
        )
        .unwrap();
        assert_eq!(next.density, s.density);
        assert_eq!(rep.clipped_cells, 0);
    }

    #[test]
    fn cfl_rejection_names_admissible_step() {
        let grid = GridSpec::new(1, 10).unwrap();
        let s = MacroState::new(ScalarField::constant(grid, 1.0));
        let v = VectorField::uniform(grid, [100.0, 0.0]);
        let err = lax_friedrichs_step(&s, &v, &ScalarField::zeros(grid), 0.01).unwrap_err();
        match err {
            Error::CflExceeded { cfl, admissible_dt } => {
                assert!(cfl > 1.0);
                assert!((admissible_dt * 100.0 / grid.spacing() - 1.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clipping_preserves_mass() {
        let mut v = vec![1.0, -0.5, 2.0, 0.5];
        let before: f64 = v.iter().sum();
        assert_eq!(clip_negative(&mut v), 1);
        let after: f64 = v.iter().sum();
        assert!((before - after).abs() < 1e-14);
        assert!(v.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn static_reference_is_untouched() {
        let grid = GridSpec::new(2, 12).unwrap();
        let k = KernelOnGrid::new(&KernelSpec::default(), grid).unwrap();
        let rho = ScalarField::from_fn(grid, |x| 1.0 + 0.5 * x[0].cos());
        let s = MacroState::new(rho.clone());
        let next = reference_step(&s, &k, 0.001, TargetMode::Static).unwrap();
        assert_eq!(next.density, rho);
    }

    #[test]
    fn subcycling_splits_large_steps() {
        let grid = GridSpec::new(1, 50).unwrap();
        let rho = ScalarField::from_fn(grid, |x| 1.0 + 0.2 * x[0].sin());
        let s = MacroState::new(rho);
        let v = VectorField::uniform(grid, [200.0, 0.0]);
        let (next, rep) = advance_subcycled(&s, &v, &ScalarField::zeros(grid), 0.001, 0.9).unwrap();
        assert_eq!(rep.substeps, 2);
        assert!(rep.max_cfl <= 0.9);
        assert!((next.time - 0.001).abs() < 1e-18);
        assert!((next.mass() - s.mass()).abs() < 1e-12);
    }
}
