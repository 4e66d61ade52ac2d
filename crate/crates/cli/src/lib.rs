//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a verification check fails or a run
//! cannot complete, 2 on usage or configuration errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use qest::analysis::convergence_summary;
use qest::campaign::{simulate, simulate_cycles, simulate_ensemble};
use qest::ensemble::{compare_reduced_vs_collective, EnsembleSpec};
use qest::output::{aggregate, emit_results, to_pretty_json, write_resolved_config, REPORT_FILE};
use qest::scenario::{parse_config_file, preset, PRESETS};
use qest::verify::{run_verification, VerifyOptions};
use qest::{QestError, ScenarioSpec, TrajectoryRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Fidelity level used for the convergence-time summary.
const CONVERGENCE_LEVEL: f64 = 0.95;

#[derive(Debug, Parser)]
#[command(name = "qest", version, about = "Continuous quantum measurement and state estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the coupled true/estimated state equations.
    Simulate(Common),
    /// Run the discrete Gaussian measurement-cycle model.
    Cycle(Common),
    /// Integrate the reduced N-copy ensemble equations.
    Ensemble(EnsembleArgs),
    /// Run the property suite and write a JSON report.
    Verify(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Master seed; trajectory k draws from stream k of this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trajectories: Option<usize>,
    /// Final time of each trajectory.
    #[arg(long)]
    horizon: Option<f64>,
    /// Integrator step (must satisfy dt * max gamma <= 0.01).
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    #[command(flatten)]
    common: Common,
    /// Number of copies N (overrides the scenario's ensemble block).
    #[arg(long)]
    copies: Option<usize>,
    /// Collective measurement strength (overrides the scenario's ensemble block).
    #[arg(long)]
    gamma_c: Option<f64>,
    /// Also compare against the full tensor-product equations on this many seeds.
    #[arg(long)]
    compare_seeds: Option<usize>,
    /// Horizon of the comparison run (defaults to 0.1/gamma_c).
    #[arg(long)]
    compare_horizon: Option<f64>,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<QestError> for Failure {
    fn from(e: QestError) -> Self {
        match e {
            QestError::Config { .. }
            | QestError::InvalidParameter { .. }
            | QestError::DimensionMismatch { .. }
            | QestError::InvalidMatrix(_)
            | QestError::NotHermitian { .. }
            | QestError::TraceNotUnit { .. }
            | QestError::NotPositive { .. }
            | QestError::NotNormalized { .. }
            | QestError::SseRequiresUnitEfficiency { .. } => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl Common {
    fn scenario(&self) -> Result<ScenarioSpec, Failure> {
        let mut spec = match (&self.config, &self.preset) {
            (Some(path), _) => parse_config_file(path).map_err(|e| match e {
                QestError::Io(msg) => Failure::Usage(format!("cannot read {}: {msg}", path.display())),
                other => other.into(),
            })?,
            (None, Some(name)) => preset(name)?,
            (None, None) => {
                return Err(Failure::Usage(format!(
                    "one of --config or --preset is required (presets: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(n) = self.trajectories {
            spec.n_trajectories = n;
        }
        if let Some(t) = self.horizon {
            spec.horizon = t;
        }
        if let Some(dt) = self.dt {
            spec.integrator.dt = dt;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CHECK_FAILED
        }
    }
}

fn dispatch(command: Command) -> Result<i32, Failure> {
    match command {
        Command::Simulate(args) => {
            let spec = args.scenario()?;
            let records = simulate(&spec)?;
            finish_run(&spec, &records, None, &args.out)
        }
        Command::Cycle(args) => {
            let spec = args.scenario()?;
            let records = simulate_cycles(&spec)?;
            finish_run(&spec, &records, None, &args.out)
        }
        Command::Ensemble(args) => ensemble(args),
        Command::Verify(args) => {
            let spec = args.scenario()?;
            write_resolved_config(&spec, &args.out)?;
            let report = run_verification(&spec, &VerifyOptions::default())?;
            let value = serde_json::to_value(&report).map_err(|e| Failure::Run(e.to_string()))?;
            let path = args.out.join(REPORT_FILE);
            std::fs::write(&path, to_pretty_json(&value)).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
            for check in &report.checks {
                let mark = if check.passed { "ok  " } else { "FAIL" };
                println!("{mark} {} = {:.4e} (threshold {:.4e})", check.name, check.statistic, check.threshold);
            }
            println!("report written to {}", path.display());
            Ok(if report.passed { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
    }
}

fn ensemble(args: EnsembleArgs) -> Result<i32, Failure> {
    let spec = args.common.scenario()?;
    let block = spec.ensemble;
    let n = args.copies.or(block.map(|e| e.n_copies)).unwrap_or(1);
    let gamma_c = match args.gamma_c.or(block.map(|e| e.gamma_c)) {
        Some(g) => g,
        None => spec.channels.first().map(|c| c.gamma()).ok_or_else(|| {
            Failure::Usage("scenario has no channels and no --gamma-c was given".into())
        })?,
    };
    let ens = EnsembleSpec::new(spec.clone(), n, gamma_c)?;
    let records = simulate_ensemble(&ens)?;
    let comparison = match args.compare_seeds {
        Some(k) => {
            let horizon = args.compare_horizon.unwrap_or(0.1 / gamma_c);
            let seeds: Vec<u64> = (0..k as u64).map(|i| spec.seed + i).collect();
            Some(compare_reduced_vs_collective(&ens, horizon, &seeds)?)
        }
        None => None,
    };
    let report = json!({
        "n_copies": n,
        "gamma_c": gamma_c,
        "convergence": convergence_summary(&records, CONVERGENCE_LEVEL),
        "comparison": comparison,
    });
    finish_run(&spec, &records, Some(&report), &args.common.out)
}

fn finish_run(
    spec: &ScenarioSpec,
    records: &[TrajectoryRecord],
    report: Option<&serde_json::Value>,
    out: &Path,
) -> Result<i32, Failure> {
    write_resolved_config(spec, out)?;
    let stats = aggregate(records);
    let paths = emit_results(records, stats.as_ref(), report, out)?;
    let aborted = records.iter().filter(|r| r.truncated).count();
    println!(
        "{} trajectories ({} aborted), {} files written to {}",
        records.len(),
        aborted,
        paths.len() + 1,
        out.display()
    );
    if let Some(s) = &stats {
        if let (Some(f), Some(h)) = (s.fidelity.mean.last(), s.hs_distance.mean.last()) {
            println!("final mean fidelity {f:.6}, mean hs distance {h:.6}");
        }
    }
    for r in records.iter().filter(|r| r.truncated) {
        if let Some(reason) = &r.abort_reason {
            eprintln!("trajectory {}: {reason}", r.stream_id);
        }
    }
    Ok(EXIT_OK)
}
