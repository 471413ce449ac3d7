//! Cold-start benchmark over random initial states.
//!
//! For every ρ and every reference, trial `k` solves one tracking problem
//! from the scenario's `k`-th initial state, starting from the cold state.
//! Only the iteration loop is timed. Iteration counts are deterministic for
//! a given seed; times are not.

use std::io::Write;
use std::path::Path;

use mpct_core::{AdmmState, AdmmWorkspace, PrecomputedData, SolveStatus};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::scenario::LoadedScenario;

pub const BENCH_FORMAT: &str = "mpct-bench-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub rho: f64,
    pub reference: String,
    pub trial: usize,
    /// `None` when the solve returned an error.
    pub status: Option<SolveStatus>,
    pub iterations: usize,
    pub solve_time_ms: f64,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    /// Finished with a report and finite iterates.
    pub fn completed(&self) -> bool {
        matches!(self.status, Some(SolveStatus::Converged | SolveStatus::MaxIterations))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub avg: f64,
    pub median: f64,
    pub max: f64,
    pub min: f64,
}

impl Aggregate {
    /// `None` for an empty sample. The median of an even count is the mean
    /// of the two middle values.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self { avg: v.iter().sum::<f64>() / n as f64, median, max: v[n - 1], min: v[0] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchStats {
    pub rho: f64,
    pub reference: String,
    pub trials: usize,
    pub completed: usize,
    pub converged: usize,
    /// Over completed trials.
    pub iterations: Option<Aggregate>,
    pub time_ms: Option<Aggregate>,
}

impl BenchStats {
    pub fn from_records(rho: f64, reference: &str, records: &[TrialRecord]) -> Self {
        let done: Vec<&TrialRecord> = records.iter().filter(|r| r.completed()).collect();
        let iters: Vec<f64> = done.iter().map(|r| r.iterations as f64).collect();
        let times: Vec<f64> = done.iter().map(|r| r.solve_time_ms).collect();
        Self {
            rho,
            reference: reference.to_string(),
            trials: records.len(),
            completed: done.len(),
            converged: records.iter().filter(|r| r.status == Some(SolveStatus::Converged)).count(),
            iterations: Aggregate::from_values(&iters),
            time_ms: Aggregate::from_values(&times),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub format: String,
    pub seed: u64,
    pub rows: Vec<BenchStats>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchOptions {
    /// Overrides the scenario's ρ sweep.
    pub rhos: Option<Vec<f64>>,
    /// Overrides the scenario's trial count.
    pub trials: Option<usize>,
    /// Worker threads; 0 or 1 runs inline.
    pub jobs: usize,
}

/// ρ values to run: options, then the scenario's sweep, then the problem's ρ.
pub fn bench_rhos(loaded: &LoadedScenario, opts: &BenchOptions) -> Vec<f64> {
    opts.rhos
        .clone()
        .or_else(|| loaded.scenario.rho_sweep.clone())
        .unwrap_or_else(|| vec![loaded.problem.params.rho])
}

pub fn run_benchmark(loaded: &LoadedScenario, opts: &BenchOptions) -> Result<BenchReport> {
    let sc = &loaded.scenario;
    let trials = opts.trials.unwrap_or(sc.trials);
    if trials == 0 {
        return Err(HarnessError::InvalidScenario("trials must be at least 1".into()));
    }
    let x0s: Vec<Vec<f64>> = (0..trials).map(|k| sc.initial_state(k)).collect();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for rho in bench_rhos(loaded, opts) {
        let data = loaded.build(Some(rho))?;
        for reference in &sc.references {
            let recs = run_trials(&data, rho, reference, &x0s, opts.jobs);
            rows.push(BenchStats::from_records(rho, &reference.label, &recs));
            records.extend(recs);
        }
    }
    Ok(BenchReport { format: BENCH_FORMAT.to_string(), seed: sc.seed, rows, records })
}

fn run_trials(
    data: &PrecomputedData,
    rho: f64,
    reference: &crate::scenario::ReferenceSpec,
    x0s: &[Vec<f64>],
    jobs: usize,
) -> Vec<TrialRecord> {
    let run_range = |range: std::ops::Range<usize>| -> Vec<TrialRecord> {
        let mut ws = AdmmWorkspace::new(data);
        range
            .map(|k| {
                let mut state = AdmmState::cold(data);
                let base = TrialRecord {
                    rho,
                    reference: reference.label.clone(),
                    trial: k,
                    status: None,
                    iterations: 0,
                    solve_time_ms: 0.0,
                    x0: x0s[k].clone(),
                    error: None,
                };
                match ws.solve(data, &x0s[k], &reference.x_r, &reference.u_r, &mut state) {
                    Ok(r) => TrialRecord {
                        status: Some(r.status),
                        iterations: r.iterations,
                        solve_time_ms: r.solve_time * 1e3,
                        ..base
                    },
                    Err(e) => TrialRecord { error: Some(e.to_string()), ..base },
                }
            })
            .collect()
    };
    let n = x0s.len();
    let jobs = jobs.clamp(1, n);
    if jobs == 1 {
        return run_range(0..n);
    }
    let chunk = n.div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> =
            (0..jobs).map(|j| (j * chunk)..((j + 1) * chunk).min(n)).map(|r| s.spawn(move || run_range(r))).collect();
        handles.into_iter().flat_map(|h| h.join().expect("benchmark worker panicked")).collect()
    })
}

/// One row per trial: `rho, reference, trial, status, iterations, solve_time_ms, x0_0..`.
pub fn write_trial_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let nx = records.first().map_or(0, |r| r.x0.len());
    let mut header: Vec<String> =
        ["rho", "reference", "trial", "status", "iterations", "solve_time_ms"].iter().map(|s| s.to_string()).collect();
    header.extend((0..nx).map(|i| format!("x0_{i}")));
    w.write_record(&header)?;
    for r in records {
        let status = match r.status {
            Some(SolveStatus::Converged) => "converged",
            Some(SolveStatus::MaxIterations) => "max_iterations",
            Some(SolveStatus::NumericalError) => "numerical_error",
            None => "error",
        };
        let mut row = vec![
            r.rho.to_string(),
            r.reference.clone(),
            r.trial.to_string(),
            status.to_string(),
            r.iterations.to_string(),
            r.solve_time_ms.to_string(),
        ];
        row.extend(r.x0.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}

pub fn write_report_json(report: &BenchReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}
