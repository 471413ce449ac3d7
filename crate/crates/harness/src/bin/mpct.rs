use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpct_core::problem_file::{ProblemDefinition, ProblemFile};
use mpct_core::{admm_solve, build_problem_with_scaling, AdmmState, PrecomputedData, SolveStatus};
use mpct_harness::bench::{run_benchmark, write_report_json, write_trial_csv, BenchOptions};
use mpct_harness::check::{cross_validate, CheckTolerances};
use mpct_harness::scenario::{resolve_problem, LoadedScenario};
use mpct_harness::{models, simulate_trial, write_plot_csv, HarnessError};
use serde::{Deserialize, Serialize};

const CACHE_FORMAT: &str = "mpct-cache-v1";

const EXIT_FAILURE: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_INVALID_INPUT: u8 = 3;

/// MPC for tracking solved by ADMM with semi-banded (banded + low-rank) solves.
///
/// Problem arguments accept a path to a problem file, a precomputed cache
/// (where noted) or `builtin:<name>` for a bundled model.
#[derive(Debug, Parser)]
#[command(name = "mpct", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Overrides {
    /// ADMM penalty
    #[arg(long, global = true, allow_negative_numbers = true)]
    rho: Option<f64>,
    #[arg(long, global = true)]
    eps_primal: Option<f64>,
    #[arg(long, global = true)]
    eps_dual: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Scenario RNG seed
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the offline phase and write the factorizations to a cache file.
    Precompute {
        problem: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Solve one MPCT problem and print the report as JSON.
    Solve {
        /// Problem file, cache file or builtin:<name>
        problem: String,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        x0: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        xr: Vec<f64>,
        /// Defaults to zero
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        ur: Option<Vec<f64>>,
        /// Warm-start state written by an earlier --state-out
        #[arg(long)]
        warm: Option<PathBuf>,
        #[arg(long)]
        state_out: Option<PathBuf>,
    },
    /// Closed-loop run of one scenario trial, written as plot CSV.
    Simulate {
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Reference label; defaults to the first one
        #[arg(long)]
        reference: Option<String>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Cold-start benchmark over the scenario's random initial states.
    Bench {
        scenario: PathBuf,
        /// Aggregate statistics (JSON)
        #[arg(short, long)]
        output: PathBuf,
        /// Per-trial records (CSV)
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Comma-separated ρ values; overrides the scenario sweep
        #[arg(long, value_delimiter = ',')]
        rhos: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Cross-validate the structured solver against the dense oracle.
    Check {
        problem: String,
        /// Defaults to zero
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x0: Option<Vec<f64>>,
        /// Defaults to zero
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        xr: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        ur: Option<Vec<f64>>,
    },
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    format: String,
    data: PrecomputedData,
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Failed(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        use mpct_core::Error as E;
        match &e {
            HarnessError::Io { .. } | HarnessError::InvalidScenario(_) | HarnessError::Json(_) => {
                CliError::Invalid(e.to_string())
            }
            HarnessError::Solver(
                E::CostNotPositiveDefinite(_)
                | E::RankDeficientG { .. }
                | E::DimensionMismatch { .. }
                | E::NonFiniteInput(_)
                | E::EmptyTightenedBox { .. }
                | E::InvalidBounds { .. }
                | E::InvalidParameter(_)
                | E::Format(_),
            ) => CliError::Invalid(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<mpct_core::Error> for CliError {
    fn from(e: mpct_core::Error) -> Self {
        HarnessError::from(e).into()
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap's own usage-error code would collide with "not converged"
            return if e.use_stderr() { ExitCode::from(EXIT_INVALID_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID_INPUT)
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    let ov = &cli.overrides;
    match cli.command {
        Command::Precompute { problem, output } => {
            let data = build(&load_definition(&problem)?, ov)?;
            let cache = CacheFile { format: CACHE_FORMAT.into(), data };
            write_json(&output, &cache)?;
            eprintln!("wrote {}", output.display());
            Ok(0)
        }
        Command::Solve { problem, x0, xr, ur, warm, state_out } => {
            let data = load_data(&problem, ov)?;
            let ur = ur.unwrap_or_else(|| vec![0.0; data.nu()]);
            let warm: Option<AdmmState> = warm.map(|p| read_json(&p)).transpose()?;
            let (report, state) = admm_solve(&data, &x0, &xr, &ur, warm.as_ref())?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Failed(e.to_string()))?);
            if let Some(path) = state_out {
                write_json(&path, &state)?;
            }
            Ok(status_code(report.status))
        }
        Command::Simulate { scenario, output, reference, trial } => {
            let loaded = load_scenario(&scenario, ov)?;
            let idx = match reference {
                None => 0,
                Some(label) => loaded
                    .scenario
                    .references
                    .iter()
                    .position(|r| r.label == label)
                    .ok_or_else(|| CliError::Invalid(format!("no reference labeled {label:?}")))?,
            };
            let data = loaded.build(ov.rho)?;
            let traj = simulate_trial(&loaded, &data, idx, trial)?;
            write_plot_csv(&traj, &output)?;
            let not_converged = traj.steps.iter().filter(|s| s.status != SolveStatus::Converged).count();
            eprintln!(
                "{} steps, final state {:?}, {} steps hit max_iter",
                traj.steps.len(),
                traj.final_state,
                not_converged
            );
            if let Some(f) = traj.failure {
                return Err(CliError::Failed(HarnessError::from(f).to_string()));
            }
            Ok(if not_converged > 0 { EXIT_NOT_CONVERGED } else { 0 })
        }
        Command::Bench { scenario, output, csv, rhos, trials, jobs } => {
            let loaded = load_scenario(&scenario, ov)?;
            let rhos = rhos.or_else(|| ov.rho.map(|r| vec![r]));
            let report = run_benchmark(&loaded, &BenchOptions { rhos, trials, jobs })?;
            write_report_json(&report, &output)?;
            if let Some(path) = csv {
                let file = std::fs::File::create(&path).map_err(|e| io_err(&path, e))?;
                write_trial_csv(&report.records, std::io::BufWriter::new(file))?;
            }
            for row in &report.rows {
                let it = row.iterations.map(|a| format!("{:.1}/{}/{}/{}", a.avg, a.median, a.max, a.min));
                eprintln!(
                    "rho {:<6} {:<12} converged {}/{} iterations avg/median/max/min {}",
                    row.rho,
                    row.reference,
                    row.converged,
                    row.trials,
                    it.unwrap_or_else(|| "-".into())
                );
            }
            Ok(0)
        }
        Command::Check { problem, x0, xr, ur } => {
            let data = load_data(&problem, ov)?;
            let zeros = |n| vec![0.0; n];
            let x0 = x0.unwrap_or_else(|| zeros(data.nx()));
            let xr = xr.unwrap_or_else(|| zeros(data.nx()));
            let ur = ur.unwrap_or_else(|| zeros(data.nu()));
            let report = cross_validate(&data, &x0, &xr, &ur, &CheckTolerances::default())?;
            for item in &report.items {
                eprintln!(
                    "{} {:<22} error {:.3e} (tolerance {:.0e}){}",
                    if item.passed { "PASS" } else { "FAIL" },
                    item.name,
                    item.error,
                    item.tolerance,
                    item.note.as_deref().map(|n| format!(" {n}")).unwrap_or_default()
                );
            }
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Failed(e.to_string()))?);
            Ok(if report.passed() { 0 } else { EXIT_FAILURE })
        }
    }
}

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Converged => 0,
        SolveStatus::MaxIterations => EXIT_NOT_CONVERGED,
        SolveStatus::NumericalError => EXIT_FAILURE,
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Invalid(format!("{}: {e}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string(value).map_err(|e| CliError::Failed(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn apply_overrides(def: &mut ProblemDefinition, ov: &Overrides) {
    let p = &mut def.params;
    if let Some(rho) = ov.rho {
        p.rho = rho;
    }
    if let Some(e) = ov.eps_primal {
        p.eps_primal = e;
    }
    if let Some(e) = ov.eps_dual {
        p.eps_dual = e;
    }
    if let Some(m) = ov.max_iter {
        p.max_iter = m;
    }
}

fn build(def: &ProblemDefinition, ov: &Overrides) -> CliResult<PrecomputedData> {
    let mut def = def.clone();
    apply_overrides(&mut def, ov);
    Ok(build_problem_with_scaling(&def.model, &def.params, def.scaling.as_ref())?)
}

fn load_definition(problem: &str) -> CliResult<ProblemDefinition> {
    if problem.starts_with("builtin:") {
        return Ok(resolve_problem(problem, Path::new("."))?);
    }
    let path = Path::new(problem);
    Ok(ProblemFile::from_path(path)?.to_definition()?)
}

/// Problem file, builtin or cache.
fn load_data(problem: &str, ov: &Overrides) -> CliResult<PrecomputedData> {
    if !problem.starts_with("builtin:") {
        let path = Path::new(problem);
        let value: serde_json::Value = read_json(path)?;
        if value.get("format").and_then(|f| f.as_str()) == Some(CACHE_FORMAT) {
            if ov.rho.is_some() {
                return Err(CliError::Invalid("--rho cannot override a precomputed cache; rerun precompute".into()));
            }
            let cache: CacheFile =
                serde_json::from_value(value).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
            let mut data = cache.data;
            let (ep, ed, mi) = {
                let p = data.params();
                (ov.eps_primal.unwrap_or(p.eps_primal), ov.eps_dual.unwrap_or(p.eps_dual), ov.max_iter.unwrap_or(p.max_iter))
            };
            data.set_exit_criteria(ep, ed, mi)?;
            return Ok(data);
        }
    }
    build(&load_definition(problem)?, ov)
}

fn load_scenario(path: &Path, ov: &Overrides) -> CliResult<LoadedScenario> {
    let mut loaded = match path.to_str().and_then(|s| s.strip_prefix("builtin:")) {
        Some("ball-plate-like") => models::ball_plate_like_scenario(),
        Some(other) => return Err(CliError::Invalid(format!("unknown builtin scenario {other:?}"))),
        None => LoadedScenario::load(path)?,
    };
    if let Some(seed) = ov.seed {
        loaded.scenario.seed = seed;
    }
    apply_overrides(&mut loaded.problem, ov);
    Ok(LoadedScenario::new(loaded.scenario, loaded.problem)?)
}
