//! Paired discrete/continuous trials sharing one clock, target and disturbance.

use log::{debug, info, warn};

use crate::control::{
    control_velocity, macroscopic_control, sample_agent_inputs, solve_flux, ControlGains, SensingMode,
};
use crate::error::{Error, Result};
use crate::grid::{divergence, ScalarField, VectorField};
use crate::kernels::{kde_density, KdeSpec, KernelOnGrid};
use crate::macro_sim::{advance_subcycled, reference_step, MacroState, TargetMode, CFL_WARN};
use crate::micro::{disturbance_field, euler_step, pairwise_velocity, AgentState, DisturbanceSpec};

use super::config::{ControlMode, TrialConfig};

/// `E(t) = 100 ||e(t)||^2 / max_t ||e(t)||^2`. An all-zero series maps to zeros.
pub fn percentage_error(err2: &[f64]) -> Vec<f64> {
    let peak = err2.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        if !err2.is_empty() {
            debug!("error series is identically zero; percentage error set to zero");
        }
        return vec![0.0; err2.len()];
    }
    err2.iter().map(|v| 100.0 * v / peak).collect()
}

/// Largest value over the final tenth of a series (at least one entry).
pub fn tail_limsup(series: &[f64]) -> f64 {
    let k = series.len().div_ceil(10).max(1);
    series[series.len().saturating_sub(k)..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LegSeries {
    /// `||e(t)||_2^2` per recorded step.
    pub err2: Vec<f64>,
    pub ebar: Vec<f64>,
    pub mass: Vec<f64>,
    /// Per-step `mass(next) - mass(prev) - dt integrate(source)`; empty for the discrete leg.
    pub mass_residual: Vec<f64>,
    pub negative_cells: usize,
    pub projections: usize,
    pub max_substeps: usize,
    /// Agent count per recorded step; empty for the continuous leg.
    pub agent_count: Vec<usize>,
}

impl LegSeries {
    pub fn err_norm(&self) -> Vec<f64> {
        self.err2.iter().map(|v| v.sqrt()).collect()
    }

    pub fn final_ebar(&self) -> f64 {
        *self.ebar.last().unwrap_or(&0.0)
    }

    /// Largest `||e||_2` over the final tenth of the trial.
    pub fn observed_limsup(&self) -> f64 {
        tail_limsup(&self.err_norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub target: ScalarField,
    pub continuous: Option<ScalarField>,
    pub discrete: Option<ScalarField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub t: Vec<f64>,
    pub continuous: Option<LegSeries>,
    pub discrete: Option<LegSeries>,
    pub snapshots: Vec<Snapshot>,
    pub trajectory: Vec<(usize, AgentState)>,
    pub final_target: ScalarField,
    pub final_continuous: Option<ScalarField>,
    pub final_discrete: Option<ScalarField>,
    pub final_agents: Option<AgentState>,
}

struct Context<'a> {
    cfg: &'a TrialConfig,
    kernel: KernelOnGrid,
    gains: ControlGains,
    sensing: SensingMode,
    kde: KdeSpec,
    disturbance: DisturbanceSpec,
}

impl Context<'_> {
    /// Control velocity `U` for density `rho` against target `rho_d`.
    fn control(&self, rho: &ScalarField, rho_d: &ScalarField, feedforward: Option<&ScalarField>) -> Result<(ScalarField, VectorField, bool)> {
        let e = rho_d - rho;
        let mut q = macroscopic_control(&e, rho, rho_d, &self.kernel, &self.gains, self.sensing)?;
        if let Some(s) = feedforward {
            q = &q + s;
        }
        let (sol, w) = solve_flux(&q, &self.gains)?;
        let u = control_velocity(&w, rho, &self.gains)?;
        Ok((q, u, sol.projected()))
    }
}

fn check_finite(field: &ScalarField, step: usize, what: &str) -> Result<()> {
    if field.is_finite() {
        return Ok(());
    }
    let bad = field.values().iter().position(|v| !v.is_finite()).unwrap_or(0);
    Err(Error::NonFiniteState {
        step,
        what: format!(
            "{what}: first non-finite cell {bad} of {}, integral {:e}",
            field.values().len(),
            field.integrate()
        ),
    })
}

/// Runs the configured trial. Each step computes the control from the
/// current states, records `||e||^2`, then advances target, density and
/// agents by `dt`.
pub fn run_trial(cfg: &TrialConfig) -> Result<TrialResult> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let kernel = KernelOnGrid::new(&cfg.kernel, grid)?;
    let sensing = if cfg.kernel.is_full_sensing(grid.dim()) {
        SensingMode::Full
    } else {
        SensingMode::Limited
    };
    let ctx = Context {
        cfg,
        kernel,
        gains: cfg.gains(grid)?,
        sensing,
        kde: cfg.kde_spec(),
        disturbance: cfg.disturbance(grid)?,
    };
    info!(
        "trial: d={} n={} N={} dt={} steps={} kp={} sensing={:?}",
        cfg.dim, cfg.cells, cfg.agents, cfg.dt, cfg.steps, cfg.kp, cfg.kernel.sensing
    );

    let rho_d0 = cfg.target_density(grid)?;
    let mut target = MacroState::new(rho_d0.clone());
    let mut cont = cfg
        .legs
        .continuous()
        .then(|| MacroState::new(cfg.initial_density(grid, &rho_d0)));
    let mut agents = if cfg.legs.discrete() {
        Some(cfg.initial_agents()?)
    } else {
        None
    };
    let mut cont_series = cont.as_ref().map(|_| LegSeries::default());
    let mut disc_series = agents.as_ref().map(|_| LegSeries::default());
    let mut t = Vec::with_capacity(cfg.steps + 1);
    let mut snapshots = Vec::new();
    let mut trajectory = Vec::new();
    let dt = cfg.dt;

    // Fixed target with interaction drift: feed the drift forward.
    let feedforward = if cfg.target_mode == TargetMode::Static && cfg.static_feedforward {
        let vd = ctx.kernel.convolve(&rho_d0, false)?;
        Some(divergence(&rho_d0.times_vector(&vd)?))
    } else {
        None
    };

    for step in 0..=cfg.steps {
        let time = step as f64 * dt;
        t.push(time);
        let last = step == cfg.steps;
        let rho_d = &target.density;
        let snap = cfg.snapshot_stride > 0 && (step % cfg.snapshot_stride == 0 || last);
        let mut snapshot = Snapshot {
            step,
            target: rho_d.clone(),
            continuous: None,
            discrete: None,
        };

        let mut next_cont = None;
        if let (Some(state), Some(series)) = (cont.as_ref(), cont_series.as_mut()) {
            check_finite(&state.density, step, "continuous density")?;
            let e = rho_d - &state.density;
            series.err2.push(e.l2_norm().powi(2));
            series.mass.push(state.mass());
            if snap {
                snapshot.continuous = Some(state.density.clone());
            }
            if !last {
                let (q, u, projected) = ctx.control(&state.density, rho_d, feedforward.as_ref())?;
                series.projections += projected as usize;
                let v = ctx.kernel.convolve(&state.density, false)?;
                let w = disturbance_field(&ctx.disturbance, grid, time);
                let drift = v.add(&w)?;
                let (velocity, source) = match ctx.cfg.control_mode {
                    ControlMode::Flux => (drift.add(&u)?, ScalarField::zeros(grid)),
                    ControlMode::Source => (drift, q),
                };
                let (next, rep) = advance_subcycled(state, &velocity, &source, dt, CFL_WARN)?;
                series.mass_residual.push(rep.mass_residual);
                series.negative_cells += rep.clipped_cells;
                series.max_substeps = series.max_substeps.max(rep.substeps);
                next_cont = Some(next);
            }
        }

        let mut next_agents = None;
        if let (Some(swarm), Some(series)) = (agents.as_ref(), disc_series.as_mut()) {
            let rho_n = kde_density(swarm, &ctx.kde, grid)?;
            check_finite(&rho_n, step, "agent density estimate")?;
            let e = rho_d - &rho_n;
            series.err2.push(e.l2_norm().powi(2));
            series.mass.push(rho_n.integrate());
            series.agent_count.push(swarm.len());
            if snap {
                snapshot.discrete = Some(rho_n.clone());
            }
            if cfg.trajectory_stride > 0 && (step % cfg.trajectory_stride == 0 || last) {
                trajectory.push((step, swarm.clone()));
            }
            if !last {
                let (_, u, projected) = ctx.control(&rho_n, rho_d, feedforward.as_ref())?;
                series.projections += projected as usize;
                let inputs = sample_agent_inputs(&u, swarm)?;
                let v = pairwise_velocity(swarm, &cfg.kernel, false);
                next_agents = Some(euler_step(swarm, &v, &inputs, &ctx.disturbance, dt)?);
            }
        }

        if snap {
            snapshots.push(snapshot);
        }
        if last {
            break;
        }
        target = reference_step(&target, &ctx.kernel, dt, cfg.target_mode)?;
        if next_cont.is_some() {
            cont = next_cont;
        }
        if next_agents.is_some() {
            agents = next_agents;
        }
    }

    for series in [cont_series.as_mut(), disc_series.as_mut()].into_iter().flatten() {
        series.ebar = percentage_error(&series.err2);
        if series.projections > 0 {
            warn!("{} control sources had their mean projected out", series.projections);
        }
    }
    let final_discrete = match &agents {
        Some(a) => Some(kde_density(a, &ctx.kde, grid)?),
        None => None,
    };
    Ok(TrialResult {
        t,
        continuous: cont_series,
        discrete: disc_series,
        snapshots,
        trajectory,
        final_target: target.density,
        final_continuous: cont.map(|s| s.density),
        final_discrete,
        final_agents: agents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentage_error_examples() {
        assert_eq!(percentage_error(&[4.0, 1.0, 0.25]), vec![100.0, 25.0, 6.25]);
        assert_eq!(percentage_error(&[2.0, 2.0]), vec![100.0, 100.0]);
        assert_eq!(percentage_error(&[0.0, 0.0]), vec![0.0, 0.0]);
        let e = percentage_error(&[1.0, 3.0, 2.0]);
        assert_eq!(e[1], 100.0);
    }

    #[test]
    fn tail_limsup_uses_final_tenth() {
        let s: Vec<f64> = (0..21).map(|i| i as f64).collect();
        assert_eq!(tail_limsup(&s), 20.0);
        let s = [5.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0];
        assert_eq!(tail_limsup(&s), 2.0);
    }

    #[test]
    fn small_trial_runs_both_legs() {
        let cfg = TrialConfig::parse("cells = 16\nagents = 20\nsteps = 5\nsnapshot_stride = 2\ntrajectory_stride = 5", "t").unwrap();
        let r = run_trial(&cfg).unwrap();
        assert_eq!(r.t.len(), 6);
        let c = r.continuous.as_ref().unwrap();
        let d = r.discrete.as_ref().unwrap();
        assert_eq!(c.err2.len(), 6);
        assert_eq!(d.err2.len(), 6);
        assert_eq!(c.mass_residual.len(), 5);
        assert!(d.agent_count.iter().all(|n| *n == 20));
        assert_eq!(r.snapshots.iter().map(|s| s.step).collect::<Vec<_>>(), vec![0, 2, 4, 5]);
        assert_eq!(r.trajectory.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 5]);
        assert!(c.ebar.iter().all(|v| (0.0..=100.0).contains(v)));
    }
}
