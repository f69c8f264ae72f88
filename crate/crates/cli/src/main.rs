//! `continuum`: plan, simulate and safety-verify leader–follower maneuvers.
//!
//! Exit status: 0 on success with every checked run safe, 1 when a safety
//! condition is violated, 2 on any error. Relative output paths are resolved
//! against `$CONTINUUM_OUT_DIR` when it is set.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use continuum_core::harness::mintime::{min_safe_time, plan_for, MinTimeOptions};
use continuum_core::harness::sim::{run_simulation, EstimatorMode, SimMode};
use continuum_core::harness::trace::SimulationTrace;
use continuum_core::harness::ScenarioConfig;
use continuum_core::planner::{LeaderTrajectory, TimeSearchError};
use continuum_core::safety::{monte_carlo_verify, verify_run, SafetyThresholds};
use serde_json::json;

const OUT_DIR_VAR: &str = "CONTINUUM_OUT_DIR";

#[derive(Parser)]
#[command(name = "continuum", version, about = "Leader-follower continuum deformation planner and verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan the leaders' trajectories and write them as CSV.
    Plan {
        #[arg(long)]
        config: PathBuf,
        /// Maneuver duration (s); defaults to the scenario's.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one closed-loop simulation and write its trace.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the safety report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check a recorded trace against the safety conditions.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Verify a batch of seeded runs.
    Montecarlo {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Defaults to the scenario seed.
        #[arg(long)]
        base_seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Search the smallest travel time at which every run is safe.
    Mintime {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        t_min: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long)]
        base_seed: Option<u64>,
        /// Defaults to the scenario's resolution.
        #[arg(long)]
        resolution: Option<f64>,
        /// Extra probes above the result to detect non-monotone feasibility.
        #[arg(long, default_value_t = 2)]
        monotonicity_checks: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Maneuver duration (s); defaults to the scenario's.
    #[arg(long)]
    duration: Option<f64>,
    /// Feed followers their true states instead of the estimates.
    #[arg(long)]
    bypass_estimator: bool,
    /// Disable process and measurement noise.
    #[arg(long)]
    noise_free: bool,
}

impl RunArgs {
    fn mode(&self) -> SimMode {
        SimMode {
            estimator: if self.bypass_estimator {
                EstimatorMode::Bypass
            } else {
                EstimatorMode::Cooperative
            },
            noise: !self.noise_free,
        }
    }
}

type Failure = Box<dyn std::error::Error>;

fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) if p.is_relative() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let cfg = ScenarioConfig::load(path)?;
    for line in &cfg.defaults_applied {
        eprintln!("default: {line}");
    }
    Ok(cfg)
}

fn duration(cfg: &ScenarioConfig, arg: Option<f64>) -> Result<f64, Failure> {
    arg.or(cfg.planner.duration)
        .ok_or_else(|| "no duration given and the scenario defines none".into())
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)?;
    // A closed pipe on stdout (e.g. `| head`) is not an error.
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
        _ => {}
    }
    if let Some(p) = path {
        std::fs::write(out_path(p), text + "\n")?;
    }
    Ok(())
}

fn write_trajectory(traj: &LeaderTrajectory, path: &Path) -> Result<(), Failure> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut head = vec!["time".to_string()];
    for l in 1..=3 {
        for c in ["x", "y", "vx", "vy", "ax", "ay"] {
            head.push(format!("{c}_{l}"));
        }
    }
    writeln!(w, "{}", head.join(","))?;
    for (k, s) in traj.samples().iter().enumerate() {
        let mut vals = vec![traj.node_time(k)];
        for x in s {
            vals.extend([
                x.position.x,
                x.position.y,
                x.velocity.x,
                x.velocity.y,
                x.acceleration.x,
                x.acceleration.y,
            ]);
        }
        let line: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn verdict(safe: bool) -> ExitCode {
    if safe {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Plan { config, duration: d, out } => {
            let cfg = load(&config)?;
            let traj = plan_for(&cfg, duration(&cfg, d)?)?;
            write_trajectory(&traj, &out_path(&out))?;
            write_json(
                None,
                &json!({
                    "duration": traj.duration(),
                    "grid_size": traj.grid_size(),
                    "cost": traj.cost(),
                    "max_area_deviation": traj.max_area_deviation(cfg.planner.area.a0),
                    "outer_iterations": traj.diagnostics.outer_iterations,
                    "inner_iterations": traj.diagnostics.inner_iterations,
                }),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { run, seed, out, report } => {
            let cfg = load(&run.config)?;
            let traj = plan_for(&cfg, duration(&cfg, run.duration)?)?;
            let trace = run_simulation(&cfg, &traj, seed.unwrap_or(cfg.seed), run.mode())?;
            trace.export(&out_path(&out))?;
            let rep = verify_run(&trace, &cfg.safety);
            write_json(report.as_deref(), &serde_json::to_value(&rep)?)?;
            Ok(verdict(rep.all_ok()))
        }
        Command::Verify {
            trace,
            epsilon,
            delta,
            report,
        } => {
            let th = SafetyThresholds { epsilon, delta };
            th.validate()?;
            let trace = SimulationTrace::import(&trace)?;
            let rep = verify_run(&trace, &th);
            write_json(report.as_deref(), &serde_json::to_value(&rep)?)?;
            Ok(verdict(rep.all_ok()))
        }
        Command::Montecarlo {
            run,
            runs,
            base_seed,
            report,
        } => {
            if runs == 0 {
                return Err("--runs must be at least 1".into());
            }
            let cfg = load(&run.config)?;
            let traj = plan_for(&cfg, duration(&cfg, run.duration)?)?;
            let mc = monte_carlo_verify(&cfg, &traj, run.mode(), runs, base_seed.unwrap_or(cfg.seed));
            write_json(report.as_deref(), &serde_json::to_value(&mc)?)?;
            Ok(verdict(mc.all_passed()))
        }
        Command::Mintime {
            run,
            t_min,
            t_max,
            runs,
            base_seed,
            resolution,
            monotonicity_checks,
            report,
        } => {
            if runs == 0 {
                return Err("--runs must be at least 1".into());
            }
            let cfg = load(&run.config)?;
            let bounds = match (t_min, t_max, cfg.planner.t_search) {
                (Some(a), Some(b), _) => (a, b),
                (a, b, Some((lo, hi))) => (a.unwrap_or(lo), b.unwrap_or(hi)),
                _ => return Err("give --t-min and --t-max or set planner.t_search".into()),
            };
            let opts = MinTimeOptions {
                bounds,
                resolution: resolution.unwrap_or(cfg.planner.t_resolution),
                runs,
                base_seed: base_seed.unwrap_or(cfg.seed),
                mode: run.mode(),
                monotonicity_checks,
            };
            match min_safe_time(&cfg, &opts) {
                Ok(out) => {
                    let probes: Vec<_> = out
                        .probes
                        .iter()
                        .map(|p| json!({"duration": p.duration, "feasible": p.feasible, "margin": p.margin}))
                        .collect();
                    write_json(
                        report.as_deref(),
                        &json!({
                            "t_star": out.t_star,
                            "resolution": out.resolution,
                            "runs": runs,
                            "worst_margin": out.payload.campaign.worst().normalized_margin(),
                            "probes": probes,
                            "non_monotone": out.non_monotone,
                        }),
                    )?;
                    Ok(ExitCode::SUCCESS)
                }
                Err(TimeSearchError::UpperBoundInfeasible(t)) => {
                    eprintln!("no safe travel time: the upper bound {t} s already fails");
                    Ok(ExitCode::from(1))
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
