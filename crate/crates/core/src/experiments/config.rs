//! Flat `key = value` trial configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys are rejected.
//! Real values accept multiples of pi (`0.1pi`, `pi/2`, `1.5*pi`) and
//! `sqrt(2)` factors, e.g. `pi*sqrt(2)`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::control::ControlGains;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Point, ScalarField, VectorField, MAX_DIM};
use crate::kernels::{
    von_mises_target, KdeSpec, KernelFamily, KernelSpec, Sensing, TargetDensitySpec,
};
use crate::macro_sim::TargetMode;
use crate::micro::{AgentState, DisturbanceShape, DisturbanceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Legs {
    Discrete,
    Continuous,
    Both,
}

impl Legs {
    pub fn discrete(self) -> bool {
        matches!(self, Legs::Discrete | Legs::Both)
    }

    pub fn continuous(self) -> bool {
        matches!(self, Legs::Continuous | Legs::Both)
    }
}

/// How the continuous leg applies the control.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    /// Through the recovered velocity `U` inside the transport flux.
    Flux,
    /// As the raw source term `q`.
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialAgents {
    Random,
    Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialDensity {
    Uniform,
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub label: Option<String>,
    pub dim: usize,
    pub cells: usize,
    pub agents: usize,
    pub dt: f64,
    pub steps: usize,
    pub kp: f64,
    /// Spectral truncation order; full band when unset.
    pub modes: Option<usize>,
    pub kernel: KernelSpec,
    pub target: TargetDensitySpec,
    pub kde_bandwidth: f64,
    /// Mass carried by each agent; `mass / agents` when unset.
    pub agent_mass: Option<f64>,
    pub disturbance_amplitude: f64,
    /// Disturbance switch-on time; half the horizon when unset.
    pub disturbance_onset: Option<f64>,
    pub disturbance_table: Option<PathBuf>,
    pub seed: u64,
    pub snapshot_stride: usize,
    pub trajectory_stride: usize,
    pub output_dir: PathBuf,
    pub target_mode: TargetMode,
    /// In static-target mode, add `div(rho_d V^d)` to `q` so that the fixed
    /// target is an equilibrium of the closed loop.
    pub static_feedforward: bool,
    pub legs: Legs,
    pub control_mode: ControlMode,
    pub initial_agents: InitialAgents,
    pub initial_density: InitialDensity,
    /// Absolute density floor; `1e-6 mass / (2 pi)^d` when unset.
    pub density_floor: Option<f64>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            label: None,
            dim: 2,
            cells: 50,
            agents: 100,
            dt: 0.001,
            steps: 200,
            kp: 100.0,
            modes: None,
            kernel: KernelSpec::default(),
            target: TargetDensitySpec::default(),
            kde_bandwidth: KdeSpec::default().bandwidth,
            agent_mass: None,
            disturbance_amplitude: 0.0,
            disturbance_onset: None,
            disturbance_table: None,
            seed: 1,
            snapshot_stride: 0,
            trajectory_stride: 0,
            output_dir: PathBuf::from("out"),
            target_mode: TargetMode::Static,
            static_feedforward: true,
            legs: Legs::Both,
            control_mode: ControlMode::Flux,
            initial_agents: InitialAgents::Random,
            initial_density: InitialDensity::Uniform,
            density_floor: None,
        }
    }
}

/// Every key accepted by [`TrialConfig::parse`].
pub const KEYS: &[&str] = &[
    "label",
    "dim",
    "cells",
    "agents",
    "dt",
    "steps",
    "kp",
    "modes",
    "sensing_radius",
    "kernel_family",
    "kernel_strength",
    "kernel_length",
    "target_kappa",
    "target_center",
    "mass",
    "kde_bandwidth",
    "agent_mass",
    "disturbance_amplitude",
    "disturbance_onset",
    "disturbance_table",
    "seed",
    "snapshot_stride",
    "trajectory_stride",
    "output_dir",
    "target_mode",
    "static_feedforward",
    "legs",
    "control_mode",
    "initial_agents",
    "initial_density",
    "density_floor",
];

/// Parses a real number with optional `pi` and `sqrt(x)` factors.
pub fn parse_real(text: &str) -> std::result::Result<f64, String> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err("empty value".into());
    }
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a, Some(b)),
        None => (s.as_str(), None),
    };
    let mut value = 1.0;
    let mut sign = 1.0;
    let mut body = num;
    if let Some(rest) = body.strip_prefix('-') {
        sign = -1.0;
        body = rest;
    }
    for factor in body.split('*') {
        value *= parse_factor(factor)?;
    }
    if let Some(d) = den {
        let d = parse_factor(d)?;
        if d == 0.0 {
            return Err("division by zero".into());
        }
        value /= d;
    }
    Ok(sign * value)
}

fn parse_factor(f: &str) -> std::result::Result<f64, String> {
    if f == "pi" {
        return Ok(PI);
    }
    if let Some(inner) = f.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
        let v: f64 = inner.parse().map_err(|_| format!("bad number `{inner}`"))?;
        if v < 0.0 {
            return Err("square root of a negative number".into());
        }
        return Ok(v.sqrt());
    }
    if let Some(head) = f.strip_suffix("pi") {
        let v: f64 = head.parse().map_err(|_| format!("bad number `{head}`"))?;
        return Ok(v * PI);
    }
    f.parse().map_err(|_| format!("bad number `{f}`"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn parse_usize(v: &str) -> std::result::Result<usize, String> {
    v.parse().map_err(|_| format!("expected a nonnegative integer, got `{v}`"))
}

impl TrialConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        if let Some(table) = &cfg.disturbance_table {
            if table.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.disturbance_table = Some(dir.join(table));
                }
            }
        }
        Ok(cfg)
    }

    /// Parses and validates; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = TrialConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Config {
                path: origin.to_string(),
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let known = KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| err(format!("unknown key `{key}`")))?;
            if seen.contains(known) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            seen.push(known);
            cfg.set(key, value).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "label" => self.label = Some(v.to_string()),
            "dim" => self.dim = parse_usize(v)?,
            "cells" => self.cells = parse_usize(v)?,
            "agents" => self.agents = parse_usize(v)?,
            "dt" => self.dt = parse_real(v)?,
            "steps" => self.steps = parse_usize(v)?,
            "kp" => self.kp = parse_real(v)?,
            "modes" => self.modes = Some(parse_usize(v)?),
            "sensing_radius" => {
                self.kernel.sensing = if v == "unlimited" {
                    Sensing::Unlimited
                } else {
                    Sensing::Radius(parse_real(v)?)
                }
            }
            "kernel_family" => self.kernel.family = KernelFamily::parse(v).map_err(|e| e.to_string())?,
            "kernel_strength" => self.kernel.strength = parse_real(v)?,
            "kernel_length" => self.kernel.length_scale = parse_real(v)?,
            "target_kappa" => self.target.concentration = parse_real(v)?,
            "target_center" => {
                let parts: Vec<&str> = v.split(',').collect();
                if parts.is_empty() || parts.len() > MAX_DIM {
                    return Err(format!("expected 1 or 2 comma-separated coordinates, got `{v}`"));
                }
                let mut c: Point = [0.0; MAX_DIM];
                for (slot, p) in c.iter_mut().zip(&parts) {
                    *slot = parse_real(p)?;
                }
                self.target.center = c;
            }
            "mass" => self.target.mass = parse_real(v)?,
            "kde_bandwidth" => self.kde_bandwidth = parse_real(v)?,
            "agent_mass" => self.agent_mass = Some(parse_real(v)?),
            "disturbance_amplitude" => self.disturbance_amplitude = parse_real(v)?,
            "disturbance_onset" => self.disturbance_onset = Some(parse_real(v)?),
            "disturbance_table" => self.disturbance_table = Some(PathBuf::from(v)),
            "seed" => self.seed = v.parse().map_err(|_| format!("bad seed `{v}`"))?,
            "snapshot_stride" => self.snapshot_stride = parse_usize(v)?,
            "trajectory_stride" => self.trajectory_stride = parse_usize(v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "target_mode" => {
                self.target_mode = match v {
                    "static" => TargetMode::Static,
                    "evolving" => TargetMode::Evolving,
                    _ => return Err(format!("target_mode must be static or evolving, got `{v}`")),
                }
            }
            "static_feedforward" => self.static_feedforward = parse_bool(v)?,
            "legs" => {
                self.legs = match v {
                    "discrete" => Legs::Discrete,
                    "continuous" => Legs::Continuous,
                    "both" => Legs::Both,
                    _ => return Err(format!("legs must be discrete, continuous or both, got `{v}`")),
                }
            }
            "control_mode" => {
                self.control_mode = match v {
                    "flux" => ControlMode::Flux,
                    "source" => ControlMode::Source,
                    _ => return Err(format!("control_mode must be flux or source, got `{v}`")),
                }
            }
            "initial_agents" => {
                self.initial_agents = match v {
                    "random" => InitialAgents::Random,
                    "lattice" => InitialAgents::Lattice,
                    _ => return Err(format!("initial_agents must be random or lattice, got `{v}`")),
                }
            }
            "initial_density" => {
                self.initial_density = match v {
                    "uniform" => InitialDensity::Uniform,
                    "target" => InitialDensity::Target,
                    _ => return Err(format!("initial_density must be uniform or target, got `{v}`")),
                }
            }
            "density_floor" => self.density_floor = Some(parse_real(v)?),
            _ => unreachable!("key list and setter out of sync: {key}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        if self.agents == 0 {
            return Err(Error::invalid("agents", "need at least one agent"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "time step must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps", "need at least one step"));
        }
        self.kernel.validate()?;
        if !(self.target.concentration >= 0.0 && self.target.concentration.is_finite()) {
            return Err(Error::invalid("target_kappa", "concentration must be nonnegative"));
        }
        if !(self.target.mass > 0.0 && self.target.mass.is_finite()) {
            return Err(Error::invalid("mass", "total mass must be positive"));
        }
        self.kde_spec().validate()?;
        if !(self.disturbance_amplitude.is_finite()) {
            return Err(Error::invalid("disturbance_amplitude", "must be finite"));
        }
        if let Some(t) = self.disturbance_onset {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::invalid("disturbance_onset", "must be a nonnegative time"));
            }
        }
        self.gains(grid)?;
        let cfl = self.cfl_estimate()?;
        if cfl > 1.0 {
            return Err(Error::invalid(
                "dt",
                format!(
                    "estimated CFL number {cfl:.3} of the uncontrolled motion exceeds 1; use dt <= {:.3e}",
                    self.dt / cfl
                ),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.dim, self.cells)
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn kde_spec(&self) -> KdeSpec {
        KdeSpec {
            bandwidth: self.kde_bandwidth,
            agent_mass: self
                .agent_mass
                .unwrap_or(self.target.mass / self.agents as f64),
        }
    }

    pub fn gains(&self, grid: GridSpec) -> Result<ControlGains> {
        let mut g = ControlGains::relative(self.kp, grid, self.target.mass)?;
        if let Some(m) = self.modes {
            g.modes = m;
        }
        if let Some(f) = self.density_floor {
            g.density_floor = f;
        }
        g.validate(grid)?;
        Ok(g)
    }

    pub fn target_density(&self, grid: GridSpec) -> Result<ScalarField> {
        von_mises_target(&self.target, grid)
    }

    pub fn initial_density(&self, grid: GridSpec, rho_d: &ScalarField) -> ScalarField {
        match self.initial_density {
            InitialDensity::Uniform => ScalarField::constant(grid, self.target.mass / grid.domain_volume()),
            InitialDensity::Target => rho_d.clone(),
        }
    }

    pub fn initial_agents(&self) -> Result<AgentState> {
        match self.initial_agents {
            InitialAgents::Random => AgentState::uniform_random(self.dim, self.agents, self.seed),
            InitialAgents::Lattice => AgentState::lattice(self.dim, self.agents),
        }
    }

    pub fn onset(&self) -> f64 {
        self.disturbance_onset.unwrap_or(0.5 * self.horizon())
    }

    pub fn disturbance(&self, grid: GridSpec) -> Result<DisturbanceSpec> {
        let onset = self.onset();
        match &self.disturbance_table {
            None => Ok(DisturbanceSpec::step(self.disturbance_amplitude, self.dim, onset)),
            Some(path) => {
                let table = load_table(path, grid)?;
                Ok(DisturbanceSpec {
                    amplitude: [0.0; MAX_DIM],
                    onset,
                    shape: DisturbanceShape::Table(table),
                })
            }
        }
    }

    /// `||rho_d - rho(0)||_2` of the continuous initial condition.
    pub fn initial_error_norm(&self) -> Result<f64> {
        let grid = self.grid()?;
        let rho_d = self.target_density(grid)?;
        let rho0 = self.initial_density(grid, &rho_d);
        Ok((&rho_d - &rho0).l2_norm())
    }

    /// CFL number of the uncontrolled motion: the interaction velocity of the
    /// target density plus the disturbance.
    pub fn cfl_estimate(&self) -> Result<f64> {
        let grid = self.grid()?;
        let rho_d = self.target_density(grid)?;
        let kernel = crate::kernels::KernelOnGrid::new(&self.kernel, grid)?;
        let v = kernel.convolve(&rho_d, false)?;
        let w = if self.disturbance_table.is_some() {
            0.0
        } else {
            self.disturbance_amplitude.abs() * self.dim as f64
        };
        Ok(crate::macro_sim::cfl_number(&v, self.dt) + self.dt * w / grid.spacing())
    }
}

/// Reads a disturbance table: one row per cell in storage order, `d`
/// coordinate columns followed by `d` velocity columns, with a header line.
pub fn load_table(path: &Path, grid: GridSpec) -> Result<VectorField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dim = grid.dim();
    let mut comps = vec![Vec::with_capacity(grid.len()); dim];
    let origin = path.display().to_string();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| Error::Config {
            path: origin.clone(),
            line: i + 1,
            reason,
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 2 * dim {
            return Err(err(format!("expected {} columns, got {}", 2 * dim, cols.len())));
        }
        for a in 0..dim {
            let v: f64 = cols[dim + a]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad number `{}`", cols[dim + a])))?;
            comps[a].push(v);
        }
    }
    if comps[0].len() != grid.len() {
        return Err(Error::Config {
            path: origin,
            line: 0,
            reason: format!("expected {} rows, got {}", grid.len(), comps[0].len()),
        });
    }
    let fields = comps
        .into_iter()
        .map(|c| ScalarField::from_values(grid, c))
        .collect::<Result<Vec<_>>>()?;
    VectorField::from_components(fields)
}
