use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use swarm_continuum::bounds::BoundsReport;
use swarm_continuum::experiments::{run_trial, sweep, write_sweep_outputs, write_trial_outputs, TrialConfig};
use swarm_continuum::Error;

#[derive(Parser)]
#[command(name = "swarm-continuum", version, about = "Density control of large swarms on the periodic square")]
struct Cli {
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true, env = "SWARM_OUT_DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one paired discrete/continuous trial.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run several trials concurrently and aggregate them into sweep.csv.
    Sweep {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
    },
    /// Print the robustness constants for a configuration and write bounds.csv.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
}

fn out_dir(cli_out: &Option<PathBuf>, cfg: &TrialConfig) -> PathBuf {
    cli_out.clone().unwrap_or_else(|| cfg.output_dir.clone())
}

fn run(cli: Cli) -> swarm_continuum::Result<()> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = TrialConfig::from_file(config)?;
            let dir = out_dir(&cli.out, &cfg);
            let result = run_trial(&cfg)?;
            write_trial_outputs(&result, &dir)?;
            for (name, leg) in [("continuous", &result.continuous), ("discrete", &result.discrete)] {
                if let Some(s) = leg {
                    println!(
                        "{name:<10}  final E = {:>10.4} %   ||e(t_f)||_2 = {:.6e}",
                        s.final_ebar(),
                        s.err2.last().copied().unwrap_or(0.0).sqrt()
                    );
                }
            }
            println!("wrote {}", dir.display());
        }
        Command::Sweep { configs } => {
            let cfgs = configs
                .iter()
                .map(|p| {
                    let mut c = TrialConfig::from_file(p)?;
                    if c.label.is_none() {
                        c.label = p.file_stem().map(|s| s.to_string_lossy().into_owned());
                    }
                    Ok(c)
                })
                .collect::<swarm_continuum::Result<Vec<_>>>()?;
            let dir = out_dir(&cli.out, &cfgs[0]);
            let outcomes = sweep(&cfgs, Some(&dir));
            write_sweep_outputs(&outcomes, &dir)?;
            for o in &outcomes {
                println!("{}", o.row.csv_line());
            }
            println!("wrote {}", dir.join("sweep.csv").display());
            if let Some(e) = outcomes.iter().find_map(|o| o.row.error.as_ref()) {
                error!("at least one trial failed: {e}");
            }
        }
        Command::Bounds { config } => {
            let cfg = TrialConfig::from_file(config)?;
            let grid = cfg.grid()?;
            let gamma = cfg.initial_error_norm()?;
            let report = BoundsReport::compute(
                &cfg.kernel,
                &cfg.target,
                &cfg.disturbance(grid)?,
                grid,
                cfg.kp,
                gamma,
            )?;
            print!("{}", report.render());
            let dir = out_dir(&cli.out, &cfg);
            write_bounds(&report, &dir)?;
        }
    }
    Ok(())
}

fn write_bounds(report: &BoundsReport, dir: &Path) -> swarm_continuum::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    let path = dir.join("bounds.csv");
    let mut buf = Vec::new();
    report
        .write_csv(&mut buf)
        .and_then(|_| std::fs::write(&path, buf))
        .map_err(|e| Error::Io { path, source: e })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
