//! Concurrent parameter sweeps with one summary row per trial.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::bounds::theorem3_bound;
use crate::error::{Error, Result};
use crate::kernels::Sensing;

use super::config::TrialConfig;
use super::output::{line_chart, write_trial_outputs, Curve};
use super::trial::{run_trial, TrialResult};

/// Nominal trials (no disturbance) count as bounded when the final error is
/// below this fraction of the initial error.
pub const NOMINAL_TOLERANCE: f64 = 1e-3;

pub const SWEEP_HEADER: &str = "label,sensing_radius,d_hat,kp,final_ebar_disc,final_ebar_cont,predicted_limsup,observed_limsup_cont,observed_limsup_disc,bound_satisfied,error";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    /// `inf` for unlimited sensing.
    pub sensing_radius: f64,
    pub d_hat: f64,
    pub kp: f64,
    pub final_ebar_disc: Option<f64>,
    pub final_ebar_cont: Option<f64>,
    pub predicted_limsup: Option<f64>,
    pub observed_limsup_cont: Option<f64>,
    pub observed_limsup_disc: Option<f64>,
    pub bound_satisfied: Option<bool>,
    pub error: Option<String>,
}

impl SweepRow {
    fn base(label: String, cfg: &TrialConfig) -> Self {
        SweepRow {
            label,
            sensing_radius: match cfg.kernel.sensing {
                Sensing::Unlimited => f64::INFINITY,
                Sensing::Radius(r) => r,
            },
            d_hat: cfg.disturbance_amplitude,
            kp: cfg.kp,
            final_ebar_disc: None,
            final_ebar_cont: None,
            predicted_limsup: None,
            observed_limsup_cont: None,
            observed_limsup_disc: None,
            bound_satisfied: None,
            error: None,
        }
    }

    fn fill(&mut self, cfg: &TrialConfig, result: &TrialResult) -> Result<()> {
        let grid = cfg.grid()?;
        let rho_d = cfg.target_density(grid)?;
        let predicted = match theorem3_bound(&cfg.disturbance(grid)?, &rho_d, cfg.kp) {
            Ok(b) => Some(b.predicted_limsup),
            Err(Error::NoGuarantee { .. }) => None,
            Err(e) => return Err(e),
        };
        self.predicted_limsup = predicted;
        if let Some(d) = &result.discrete {
            self.final_ebar_disc = Some(d.final_ebar());
            self.observed_limsup_disc = Some(d.observed_limsup());
        }
        if let Some(c) = &result.continuous {
            let observed = c.observed_limsup();
            self.final_ebar_cont = Some(c.final_ebar());
            self.observed_limsup_cont = Some(observed);
            self.bound_satisfied = match predicted {
                Some(p) if p > 0.0 => Some(observed <= p),
                Some(_) => Some(observed <= NOMINAL_TOLERANCE * c.err2[0].sqrt()),
                None => None,
            };
        }
        Ok(())
    }

    pub fn csv_line(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x:e}")).unwrap_or_default()
        }
        let label = self.label.replace([',', '\n'], " ");
        let err = self.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        format!(
            "{label},{:e},{:e},{:e},{},{},{},{},{},{},{err}",
            self.sensing_radius,
            self.d_hat,
            self.kp,
            opt(self.final_ebar_disc),
            opt(self.final_ebar_cont),
            opt(self.predicted_limsup),
            opt(self.observed_limsup_cont),
            opt(self.observed_limsup_disc),
            self.bound_satisfied.map(|b| b.to_string()).unwrap_or_default(),
        )
    }
}

pub struct SweepOutcome {
    pub row: SweepRow,
    pub result: Option<TrialResult>,
}

fn label_for(i: usize, cfg: &TrialConfig) -> String {
    cfg.label.clone().unwrap_or_else(|| format!("trial_{i:03}"))
}

/// Runs all trials concurrently. A failing trial yields a row carrying its
/// error; the other trials are unaffected. With `out`, each trial writes its
/// artifacts into `out/<label>/`.
pub fn sweep(configs: &[TrialConfig], out: Option<&Path>) -> Vec<SweepOutcome> {
    configs
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| {
            let label = label_for(i, cfg);
            let mut row = SweepRow::base(label.clone(), cfg);
            let outcome = run_trial(cfg).and_then(|result| {
                row.fill(cfg, &result)?;
                if let Some(dir) = out {
                    write_trial_outputs(&result, &dir.join(&label))?;
                }
                Ok(result)
            });
            match outcome {
                Ok(result) => SweepOutcome {
                    row,
                    result: Some(result),
                },
                Err(e) => {
                    row.error = Some(e.to_string());
                    SweepOutcome { row, result: None }
                }
            }
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

/// Writes `sweep.csv` and the comparison charts into `dir`.
pub fn write_sweep_outputs(outcomes: &[SweepOutcome], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows: Vec<SweepRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    let path = dir.join("sweep.csv");
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).map_err(|e| Error::io(&path, e))?;
    fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;

    for (leg, name) in [(true, "continuous"), (false, "discrete")] {
        let curves: Vec<Curve> = outcomes
            .iter()
            .filter_map(|o| {
                let r = o.result.as_ref()?;
                let series = if leg { r.continuous.as_ref() } else { r.discrete.as_ref() }?;
                Some(Curve::new(&o.row.label, &r.t, &series.err_norm()))
            })
            .collect();
        if curves.is_empty() {
            continue;
        }
        let mut title = String::new();
        let _ = write!(title, "Error norm, {name} leg");
        let p = dir.join(format!("sweep_{name}.svg"));
        fs::write(&p, line_chart(&title, "t", "||e||_2", &curves, true)).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
