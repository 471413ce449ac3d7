//! ADMM iterations for the tracking problem with the splitting `z = v`.
//!
//! Each iteration: one equality-constrained QP solve for `z` (three
//! semi-banded solves), a box projection for `v`, and a dual step.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dense::norm_inf;
use crate::error::{check_len, Error, Result};
use crate::problem::{PrecomputedData, ToleranceMode};
use crate::semiband::{solve_kkt_into, KktScratch};

/// Iterates of the method, in solver coordinates (after any scaling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmState {
    pub z: Vec<f64>,
    pub v: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Multiplier of `G z = b` from the last `z`-update.
    #[serde(default)]
    pub mu: Vec<f64>,
    /// Iterations performed by the solve that produced this state.
    pub k: usize,
}

impl AdmmState {
    /// `v⁰` is the origin clipped into the box, `λ⁰ = 0`.
    pub fn cold(data: &PrecomputedData) -> Self {
        let (lo, hi) = data.bounds();
        let v = lo.iter().zip(hi).map(|(l, h)| 0.0f64.max(*l).min(*h)).collect();
        Self { z: vec![0.0; data.nz()], v, lambda: vec![0.0; data.nz()], mu: vec![0.0; data.mz()], k: 0 }
    }

    fn check_dims(&self, data: &PrecomputedData) -> Result<()> {
        check_len(data.nz(), self.z.len())?;
        check_len(data.nz(), self.v.len())?;
        check_len(data.nz(), self.lambda.len())?;
        if self.v.iter().chain(&self.lambda).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput("warm-start state"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    NumericalError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: usize,
    /// `‖z - v‖∞` at exit.
    pub primal_residual: f64,
    /// `‖v⁺ - v‖∞` at exit.
    pub dual_residual: f64,
    /// `u(t)`: the `ũ_0` block of `v`, in user coordinates.
    pub control_action: Vec<f64>,
    /// `(x̃_s, ũ_s)` block of `v`, in user coordinates.
    pub artificial_state: Vec<f64>,
    pub artificial_input: Vec<f64>,
    /// Seconds spent in the iteration loop.
    pub solve_time: f64,
    pub avg_iter_time: f64,
}

/// `v = min(max(z + λ/ρ, v_lo), v_hi)` componentwise.
pub fn v_update_into(z: &[f64], lambda: &[f64], rho: f64, v_lo: &[f64], v_hi: &[f64], out: &mut [f64]) {
    let inv_rho = 1.0 / rho;
    for ((((o, z), l), lo), hi) in out.iter_mut().zip(z).zip(lambda).zip(v_lo).zip(v_hi) {
        *o = (z + inv_rho * l).max(*lo).min(*hi);
    }
}

pub fn v_update(z: &[f64], lambda: &[f64], rho: f64, v_lo: &[f64], v_hi: &[f64]) -> Result<Vec<f64>> {
    let n = z.len();
    check_len(n, lambda.len())?;
    check_len(n, v_lo.len())?;
    check_len(n, v_hi.len())?;
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    let mut out = vec![0.0; n];
    v_update_into(z, lambda, rho, v_lo, v_hi, &mut out);
    Ok(out)
}

/// `(‖z - v‖∞, ‖v - v_prev‖∞)`
pub fn residuals(z: &[f64], v: &[f64], prev_v: &[f64]) -> Result<(f64, f64)> {
    check_len(z.len(), v.len())?;
    check_len(z.len(), prev_v.len())?;
    Ok(residuals_unchecked(z, v, prev_v))
}

fn residuals_unchecked(z: &[f64], v: &[f64], prev_v: &[f64]) -> (f64, f64) {
    let primal = z.iter().zip(v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let dual = v.iter().zip(prev_v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    (primal, dual)
}

/// Preallocated buffers; one per concurrent solve.
#[derive(Debug, Clone)]
pub struct AdmmWorkspace {
    kkt: KktScratch,
    q: Vec<f64>,
    b: Vec<f64>,
    p: Vec<f64>,
    v_prev: Vec<f64>,
}

impl AdmmWorkspace {
    pub fn new(data: &PrecomputedData) -> Self {
        let (nz, mz) = (data.nz(), data.mz());
        Self { kkt: KktScratch::new(data), q: vec![0.0; nz], b: vec![0.0; mz], p: vec![0.0; nz], v_prev: vec![0.0; nz] }
    }

    /// Runs the iterations starting from `state.v`, `state.lambda` and leaves
    /// the final iterates in `state`. `x_t`, `x_r`, `u_r` are in user coordinates.
    pub fn solve(
        &mut self,
        data: &PrecomputedData,
        x_t: &[f64],
        x_r: &[f64],
        u_r: &[f64],
        state: &mut AdmmState,
    ) -> Result<SolveReport> {
        check_len(data.nx(), x_t.len())?;
        check_len(data.nx(), x_r.len())?;
        check_len(data.nu(), u_r.len())?;
        for (name, v) in [("x_t", x_t), ("x_r", x_r), ("u_r", u_r)] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteInput(name));
            }
        }
        state.check_dims(data)?;
        state.mu.resize(data.mz(), 0.0);

        let params = data.params();
        let (rho, eps_p, eps_d) = (params.rho, params.eps_primal, params.eps_dual);
        let (lo, hi) = data.bounds();
        data.assemble_into(&data.scale_state(x_t), &data.scale_state(x_r), &data.scale_input(u_r), &mut self.q, &mut self.b);

        let start = Instant::now();
        let mut status = SolveStatus::MaxIterations;
        let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
        let mut k = 0;
        while k < params.max_iter {
            for (((p, q), l), v) in self.p.iter_mut().zip(&self.q).zip(&state.lambda).zip(&state.v) {
                *p = q + l - rho * v;
            }
            solve_kkt_into(data, &self.p, &self.b, &mut self.kkt, &mut state.z, &mut state.mu);
            std::mem::swap(&mut self.v_prev, &mut state.v);
            v_update_into(&state.z, &state.lambda, rho, lo, hi, &mut state.v);
            for ((l, z), v) in state.lambda.iter_mut().zip(&state.z).zip(&state.v) {
                *l += rho * (z - v);
            }
            k += 1;

            (primal, dual) = residuals_unchecked(&state.z, &state.v, &self.v_prev);
            if !primal.is_finite() || !dual.is_finite() || state.lambda.iter().any(|l| !l.is_finite()) {
                status = SolveStatus::NumericalError;
                break;
            }
            let scale = match params.tolerance_mode {
                ToleranceMode::Absolute => 1.0,
                ToleranceMode::Relative => norm_inf(&state.v).max(norm_inf(&state.z)).max(1.0),
            };
            if primal <= eps_p * scale && dual <= eps_d * scale {
                status = SolveStatus::Converged;
                break;
            }
        }
        let elapsed = start.elapsed();
        state.k = k;

        let (nx, nu, nz) = (data.nx(), data.nu(), data.nz());
        let v = &state.v;
        Ok(SolveReport {
            status,
            iterations: k,
            primal_residual: primal,
            dual_residual: dual,
            control_action: data.unscale_input(&v[nx..nx + nu]),
            artificial_state: data.unscale_state(&v[nz - nx - nu..nz - nu]),
            artificial_input: data.unscale_input(&v[nz - nu..]),
            solve_time: elapsed.as_secs_f64(),
            avg_iter_time: if k > 0 { (elapsed / k as u32).as_secs_f64() } else { Duration::ZERO.as_secs_f64() },
        })
    }
}

/// One solve of the tracking problem. Starts from `warm` when given,
/// otherwise from [`AdmmState::cold`]; returns the final iterates for warm
/// starting the next sample time.
pub fn admm_solve(
    data: &PrecomputedData,
    x_t: &[f64],
    x_r: &[f64],
    u_r: &[f64],
    warm: Option<&AdmmState>,
) -> Result<(SolveReport, AdmmState)> {
    let mut state = match warm {
        Some(s) => s.clone(),
        None => AdmmState::cold(data),
    };
    let mut ws = AdmmWorkspace::new(data);
    let report = ws.solve(data, x_t, x_r, u_r, &mut state)?;
    Ok((report, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use crate::problem::{build_problem, LtiModel, MpctParams};

    #[test]
    fn v_update_cases() {
        let v = v_update(&[0.2, -0.3], &[0.0, 0.0], 1.0, &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(v, vec![0.2, -0.3]);
        assert_eq!(v_update(&[0.5], &[2.0], 4.0, &[0.0], &[1.0]).unwrap(), vec![1.0]);
        let v = v_update(&[1e9, -1e9], &[0.0, 0.0], 1.0, &[-1.0, f64::NEG_INFINITY], &[f64::INFINITY, 0.0]).unwrap();
        assert_eq!(v, vec![1e9, -1e9]);
        assert!(v_update(&[0.0], &[0.0], 0.0, &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn residual_cases() {
        assert_eq!(residuals(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
        let (p, _) = residuals(&[0.1, -0.3], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((p - 0.3).abs() < 1e-16);
        assert!(residuals(&[0.0], &[0.0, 1.0], &[0.0]).is_err());
    }

    fn integrator() -> PrecomputedData {
        let one = DenseMatrix::identity(1);
        let model = LtiModel::new(one.clone(), one.clone(), vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]).unwrap();
        let mut params = MpctParams::new(one.clone(), one.clone(), one.clone(), one, 3, 1.0);
        params.eps_primal = 1e-8;
        params.eps_dual = 1e-8;
        build_problem(&model, &params).unwrap()
    }

    #[test]
    fn fixed_point_converges_in_one_iteration() {
        let data = integrator();
        let x_e = 0.3;
        let nz = data.nz();
        let mut warm = AdmmState::cold(&data);
        for i in 0..nz {
            warm.v[i] = if i % 2 == 0 { x_e } else { 0.0 };
        }
        warm.z = warm.v.clone();
        let (report, state) = admm_solve(&data, &[x_e], &[x_e], &[0.0], Some(&warm)).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert_eq!(report.iterations, 1);
        assert!(report.primal_residual < 1e-12 && report.dual_residual < 1e-12);
        assert!(state.v.iter().zip(&warm.v).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn warm_state_dimension_checked() {
        let data = integrator();
        let mut warm = AdmmState::cold(&data);
        warm.v.pop();
        assert!(matches!(
            admm_solve(&data, &[0.0], &[0.0], &[0.0], Some(&warm)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn max_iterations_keeps_inputs_feasible() {
        let mut data = integrator();
        data.set_exit_criteria(1e-14, 1e-14, 3).unwrap();
        let (report, state) = admm_solve(&data, &[0.9], &[-5.0], &[0.0], None).unwrap();
        assert_eq!(report.status, SolveStatus::MaxIterations);
        assert_eq!(report.iterations, 3);
        let (lo, hi) = data.bounds();
        assert!(state.v.iter().zip(lo).zip(hi).all(|((v, l), h)| v >= l && v <= h));
        assert!(report.control_action[0].abs() <= 1.0);
    }
}
