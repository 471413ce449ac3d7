//! Closed-loop simulation: solve, apply `u(t)`, propagate the nominal model.

use mpct_core::{AdmmState, AdmmWorkspace, PrecomputedData, SolveStatus};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::scenario::{LoadedScenario, ReferenceSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub time: f64,
    /// `x(t)` before the solve.
    pub x: Vec<f64>,
    /// `u(t)` applied.
    pub u: Vec<f64>,
    pub x_s: Vec<f64>,
    pub u_s: Vec<f64>,
    pub iterations: usize,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFailure {
    pub step: usize,
    pub reason: String,
}

impl From<SimFailure> for HarnessError {
    fn from(f: SimFailure) -> Self {
        HarnessError::SolverFailed { step: f.step, reason: f.reason }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub nx: usize,
    pub nu: usize,
    pub steps: Vec<TrajectoryStep>,
    /// State after the last applied input.
    pub final_state: Vec<f64>,
    /// Set when a solve failed; the simulation stops at that step.
    pub failure: Option<SimFailure>,
}

impl Trajectory {
    pub fn empty(nx: usize, nu: usize) -> Self {
        Self { nx, nu, steps: Vec::new(), final_state: Vec::new(), failure: None }
    }
}

/// Runs `steps` sample times from `x0`. Each solve is warm-started from
/// the previous one. A numerical failure stops the run and is recorded in
/// [`Trajectory::failure`]; hitting `max_iter` is not a failure (the input
/// taken from `v` is still admissible).
pub fn simulate_closed_loop(
    data: &PrecomputedData,
    x0: &[f64],
    reference: &ReferenceSpec,
    steps: usize,
    sample_time: f64,
) -> Result<Trajectory> {
    let model = data.model();
    let (nx, nu) = (data.nx(), data.nu());
    if x0.len() != nx {
        return Err(mpct_core::Error::DimensionMismatch { expected: nx, found: x0.len() }.into());
    }
    // `data.model()` is in solver coordinates; the plant runs in user units
    let mut ws = AdmmWorkspace::new(data);
    let mut state = AdmmState::cold(data);
    let mut traj = Trajectory::empty(nx, nu);
    let mut x = x0.to_vec();
    for step in 0..steps {
        let report = match ws.solve(data, &x, &reference.x_r, &reference.u_r, &mut state) {
            Ok(r) => r,
            Err(e) => {
                traj.failure = Some(SimFailure { step, reason: e.to_string() });
                break;
            }
        };
        if report.status == SolveStatus::NumericalError {
            traj.failure = Some(SimFailure { step, reason: "non-finite iterates".into() });
            break;
        }
        let u = report.control_action.clone();
        let next = step_user(data, model, &x, &u);
        traj.steps.push(TrajectoryStep {
            step,
            time: step as f64 * sample_time,
            x: std::mem::replace(&mut x, next),
            u,
            x_s: report.artificial_state,
            u_s: report.artificial_input,
            iterations: report.iterations,
            status: report.status,
        });
    }
    traj.final_state = x;
    Ok(traj)
}

fn step_user(data: &PrecomputedData, model: &mpct_core::LtiModel, x: &[f64], u: &[f64]) -> Vec<f64> {
    let next = model.step(&data.scale_state(x), &data.scale_input(u));
    data.unscale_state(&next)
}

/// Trial `trial` of the scenario against reference `reference` (index into
/// `scenario.references`).
pub fn simulate_trial(
    loaded: &LoadedScenario,
    data: &PrecomputedData,
    reference: usize,
    trial: usize,
) -> Result<Trajectory> {
    let sc = &loaded.scenario;
    let r = sc
        .references
        .get(reference)
        .ok_or_else(|| HarnessError::InvalidScenario(format!("no reference with index {reference}")))?;
    simulate_closed_loop(data, &sc.initial_state(trial), r, sc.sim_steps, sc.sample_time)
}
