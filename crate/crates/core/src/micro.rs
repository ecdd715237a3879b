//! Agent-level simulation: pairwise kernel interactions, sampled control
//! inputs and an additive disturbance velocity, advanced by forward Euler.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{divergence, GridSpec, Point, ScalarField, VectorField, MAX_DIM};
use crate::kernels::{eval_kernel, wrap_point, wrapped_displacement, KernelSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    dim: usize,
    positions: Vec<Point>,
    time: f64,
}

impl AgentState {
    /// Wraps the given positions into the domain. Needs at least one agent.
    pub fn new(dim: usize, positions: Vec<Point>) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::invalid("dim", format!("must be 1 or 2, got {dim}")));
        }
        if positions.is_empty() {
            return Err(Error::invalid("agents", "need at least one agent"));
        }
        let positions = positions.iter().map(|p| wrap_point(p, dim)).collect();
        Ok(AgentState {
            dim,
            positions,
            time: 0.0,
        })
    }

    /// I.i.d. uniform positions from a seeded generator.
    pub fn uniform_random(dim: usize, count: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = (0..count)
            .map(|_| {
                let mut p = [0.0; MAX_DIM];
                for c in p.iter_mut().take(dim) {
                    *c = rng.random_range(-PI..PI);
                }
                p
            })
            .collect();
        Self::new(dim, positions)
    }

    /// First `count` points of the smallest regular lattice holding them.
    pub fn lattice(dim: usize, count: usize) -> Result<Self> {
        let per_axis = (count as f64).powf(1.0 / dim as f64).ceil().max(1.0) as usize;
        let per_axis = if per_axis.pow(dim as u32) < count {
            per_axis + 1
        } else {
            per_axis
        };
        let step = TAU / per_axis as f64;
        let positions = (0..count)
            .map(|i| {
                let mut p = [0.0; MAX_DIM];
                let mut rest = i;
                for a in (0..dim).rev() {
                    p[a] = -PI + (rest % per_axis) as f64 * step + 0.5 * step;
                    rest /= per_axis;
                }
                p
            })
            .collect();
        Self::new(dim, positions)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    /// Appends `step,t,agent,x1[,x2]` rows.
    pub fn write_trajectory_rows<W: Write>(&self, step: usize, out: &mut W) -> std::io::Result<()> {
        for (i, p) in self.positions.iter().enumerate() {
            if self.dim == 1 {
                writeln!(out, "{step},{:.12e},{i},{:.12e}", self.time, p[0])?;
            } else {
                writeln!(out, "{step},{:.12e},{i},{:.12e},{:.12e}", self.time, p[0], p[1])?;
            }
        }
        Ok(())
    }
}

pub fn trajectory_header(dim: usize) -> &'static str {
    if dim == 1 {
        "step,t,agent,x1"
    } else {
        "step,t,agent,x1,x2"
    }
}

/// Direct `O(N^2)` sum `v_i = sum_{k != i} f({x_i, x_k})`.
pub fn pairwise_velocity(agents: &AgentState, kernel: &KernelSpec, truncated: bool) -> Vec<Point> {
    let dim = agents.dim;
    let pos = &agents.positions;
    pos.par_iter()
        .enumerate()
        .map(|(i, xi)| {
            let mut v = [0.0; MAX_DIM];
            for (k, xk) in pos.iter().enumerate() {
                if k == i {
                    continue;
                }
                let f = eval_kernel(kernel, &wrapped_displacement(xi, xk, dim), dim, truncated);
                for a in 0..dim {
                    v[a] += f[a];
                }
            }
            v
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceShape {
    /// Spatially constant `amplitude` switched on at the onset time.
    Step,
    /// Arbitrary field, bilinearly sampled; switched on at the onset time.
    Table(VectorField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSpec {
    pub amplitude: Point,
    pub onset: f64,
    pub shape: DisturbanceShape,
}

impl DisturbanceSpec {
    pub fn none() -> Self {
        DisturbanceSpec {
            amplitude: [0.0; MAX_DIM],
            onset: 0.0,
            shape: DisturbanceShape::Step,
        }
    }

    pub fn step(amplitude: f64, dim: usize, onset: f64) -> Self {
        let mut a = [0.0; MAX_DIM];
        for v in a.iter_mut().take(dim) {
            *v = amplitude;
        }
        DisturbanceSpec {
            amplitude: a,
            onset,
            shape: DisturbanceShape::Step,
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.onset
    }

    /// The field once active, sampled at the cell centers of `grid`.
    pub fn active_field(&self, grid: GridSpec) -> VectorField {
        match &self.shape {
            DisturbanceShape::Step => VectorField::uniform(grid, self.amplitude),
            DisturbanceShape::Table(table) if table.grid() == grid => table.clone(),
            DisturbanceShape::Table(table) => VectorField::from_fn(grid, |x| table.interpolate(x)),
        }
    }

    /// Componentwise sup norms `W_bar_i` of the active field.
    pub fn component_bounds(&self, grid: GridSpec) -> Vec<f64> {
        self.active_field(grid)
            .components()
            .iter()
            .map(ScalarField::sup_norm)
            .collect()
    }

    /// `W_hat = ||div W||_inf` of the active field.
    pub fn divergence_bound(&self, grid: GridSpec) -> f64 {
        match self.shape {
            DisturbanceShape::Step => 0.0,
            DisturbanceShape::Table(_) => divergence(&self.active_field(grid)).sup_norm(),
        }
    }
}

/// `W(x, t)`.
pub fn eval_disturbance(spec: &DisturbanceSpec, x: &Point, t: f64) -> Point {
    if !spec.is_active(t) {
        return [0.0; MAX_DIM];
    }
    match &spec.shape {
        DisturbanceShape::Step => spec.amplitude,
        DisturbanceShape::Table(table) => table.interpolate(x),
    }
}

/// `W(., t)` on the cell centers of `grid`.
pub fn disturbance_field(spec: &DisturbanceSpec, grid: GridSpec, t: f64) -> VectorField {
    if spec.is_active(t) {
        spec.active_field(grid)
    } else {
        VectorField::zeros(grid)
    }
}

/// `x_i <- wrap(x_i + dt (v_i + u_i + W(x_i, t)))`.
pub fn euler_step(
    agents: &AgentState,
    interaction: &[Point],
    control: &[Point],
    disturbance: &DisturbanceSpec,
    dt: f64,
) -> Result<AgentState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "time step must be positive"));
    }
    let n = agents.len();
    if interaction.len() != n || control.len() != n {
        return Err(Error::invalid(
            "control",
            format!(
                "{n} agents but {} interaction and {} control velocities",
                interaction.len(),
                control.len()
            ),
        ));
    }
    let dim = agents.dim;
    let t = agents.time;
    let mut positions = Vec::with_capacity(n);
    for (i, x) in agents.positions.iter().enumerate() {
        let w = eval_disturbance(disturbance, x, t);
        let mut next = [0.0; MAX_DIM];
        for a in 0..dim {
            let v = interaction[i][a] + control[i][a] + w[a];
            if !v.is_finite() {
                return Err(Error::NonFiniteAgent { agent: i });
            }
            next[a] = x[a] + dt * v;
        }
        positions.push(wrap_point(&next, dim));
    }
    Ok(AgentState {
        dim,
        positions,
        time: t + dt,
    })
}

/// Mean distance from each agent to its nearest neighbor on the torus.
pub fn mean_nearest_neighbor_distance(agents: &AgentState) -> f64 {
    let dim = agents.dim;
    let pos = &agents.positions;
    if pos.len() < 2 {
        return 0.0;
    }
    let total: f64 = pos
        .iter()
        .enumerate()
        .map(|(i, xi)| {
            pos.iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, xk)| {
                    let d = wrapped_displacement(xi, xk, dim);
                    d[..dim].iter().map(|v| v * v).sum::<f64>().sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / pos.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_agent_feels_nothing() {
        let a = AgentState::new(2, vec![[0.3, -1.0]]).unwrap();
        assert_eq!(pairwise_velocity(&a, &KernelSpec::default(), false), vec![[0.0, 0.0]]);
    }

    #[test]
    fn symmetric_pair_is_antisymmetric() {
        let a = AgentState::new(2, vec![[0.2, 0.1], [-0.3, 0.4]]).unwrap();
        let v = pairwise_velocity(&a, &KernelSpec::default(), false);
        assert_eq!(v[0][0], -v[1][0]);
        assert_eq!(v[0][1], -v[1][1]);
    }

    #[test]
    fn ring_of_three_is_balanced() {
        let a = AgentState::new(1, vec![[-PI + 0.1, 0.0], [-PI + 0.1 + TAU / 3.0, 0.0], [-PI + 0.1 + 2.0 * TAU / 3.0, 0.0]]).unwrap();
        let spec = KernelSpec {
            strength: 1.0,
            ..Default::default()
        };
        for v in pairwise_velocity(&a, &spec, false) {
            assert!(v[0].abs() < 1e-12);
        }
    }

    #[test]
    fn euler_translation_and_wrap() {
        let a = AgentState::new(2, vec![[0.0, 0.0], [1.0, -1.0]]).unwrap();
        let zero = vec![[0.0; 2]; 2];
        let still = euler_step(&a, &zero, &zero, &DisturbanceSpec::none(), 0.01).unwrap();
        // onset 0 and zero amplitude: nothing moves
        assert_eq!(still.positions(), a.positions());
        let u = vec![[1.0, 2.0]; 2];
        let moved = euler_step(&a, &zero, &u, &DisturbanceSpec::none(), 0.01).unwrap();
        assert!((moved.positions()[1][0] - 1.01).abs() < 1e-15);
        assert!((moved.positions()[1][1] + 0.98).abs() < 1e-15);
        assert!((moved.time() - 0.01).abs() < 1e-18);

        let edge = AgentState::new(1, vec![[PI - 0.001, 0.0]]).unwrap();
        let w = euler_step(&edge, &[[0.0; 2]], &[[2.0, 0.0]], &DisturbanceSpec::none(), 0.001).unwrap();
        assert!((w.positions()[0][0] - (-PI + 0.001)).abs() < 1e-12);
    }

    #[test]
    fn euler_reports_bad_agent() {
        let a = AgentState::new(2, vec![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let u = vec![[0.0, 0.0], [f64::NAN, 0.0]];
        let err = euler_step(&a, &[[0.0; 2]; 2], &u, &DisturbanceSpec::none(), 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteAgent { agent: 1 }));
    }

    #[test]
    fn step_disturbance_switches_on() {
        let d = DisturbanceSpec::step(1.5 * PI, 2, 0.2);
        assert_eq!(eval_disturbance(&d, &[0.0, 0.0], 0.1), [0.0, 0.0]);
        assert_eq!(eval_disturbance(&d, &[0.0, 0.0], 0.2), [1.5 * PI, 1.5 * PI]);
        let grid = GridSpec::new(2, 10).unwrap();
        assert_eq!(divergence(&disturbance_field(&d, grid, 0.3)).sup_norm(), 0.0);
        assert_eq!(d.divergence_bound(grid), 0.0);
        assert_eq!(d.component_bounds(grid), vec![1.5 * PI, 1.5 * PI]);
    }

    #[test]
    fn seeded_positions_are_reproducible_and_in_range() {
        let a = AgentState::uniform_random(2, 100, 7).unwrap();
        let b = AgentState::uniform_random(2, 100, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.positions().iter().all(|p| p.iter().all(|c| (-PI..PI).contains(c))));
        let l = AgentState::lattice(2, 100).unwrap();
        assert_eq!(l.len(), 100);
    }
}
