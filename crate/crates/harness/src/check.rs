//! Cross-validation of the structured solver against the dense oracle for
//! one problem and one (state, reference) triple.

use mpct_core::oracle::{dense_kkt_solve, dense_qp_solve, kkt_residuals_scaled, DenseQpInstance};
use mpct_core::{
    admm_solve, assemble_online, solve_kkt_system, DenseMatrix, KktScratch, PrecomputedData, SolveStatus,
};
use serde::Serialize;

use crate::error::{HarnessError, Result};

/// Tolerances of the individual checks. All are relative to `1 + ‖reference‖∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckTolerances {
    pub transcription: f64,
    pub kkt: f64,
    pub admm: f64,
    /// Exit tolerance used for the tight ADMM run.
    pub admm_exit: f64,
    pub admm_max_iter: usize,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        Self { transcription: 1e-12, kkt: 1e-7, admm: 1e-6, admm_exit: 1e-10, admm_max_iter: 500_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckItem {
    fn new(name: &str, error: f64, tolerance: f64) -> Self {
        Self { name: name.to_string(), error, tolerance, passed: error <= tolerance, note: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }
}

fn amax(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = 1.0 + amax(b.iter().copied());
    amax(a.iter().zip(b).map(|(x, y)| if x == y { 0.0 } else { x - y })) / scale
}

/// `b` is column-major with `a.rows()` rows (the oracle's storage).
fn matrix_rel_diff(a: &DenseMatrix, b: &[f64]) -> f64 {
    let (mut worst, mut scale) = (0.0f64, 1.0f64);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let y = b[i + j * a.rows()];
            worst = worst.max((a[(i, j)] - y).abs());
            scale = scale.max(1.0 + y.abs());
        }
    }
    worst / scale
}

/// Runs the transcription, KKT and ADMM checks. `x_t`, `x_r` and `u_r` are
/// in user coordinates.
pub fn cross_validate(
    data: &PrecomputedData,
    x_t: &[f64],
    x_r: &[f64],
    u_r: &[f64],
    tol: &CheckTolerances,
) -> Result<CheckReport> {
    let (sx_t, sx_r, su_r) = (data.scale_state(x_t), data.scale_state(x_r), data.scale_input(u_r));
    let mut inst = DenseQpInstance::from_problem(data.model(), data.params(), &sx_t, &sx_r, &su_r)
        .map_err(oracle_err)?;
    inst.rho = data.rho();
    let mut items = Vec::new();

    let qp = assemble_online(data, x_t, x_r, u_r)?;
    let (lo, hi) = data.bounds();
    let transcription = matrix_rel_diff(&data.hessian_dense(), inst.h.as_slice())
        .max(matrix_rel_diff(&data.constraint_dense(), inst.g.as_slice()))
        .max(rel_diff(&qp.q, inst.q.as_slice()))
        .max(rel_diff(&qp.b, inst.b.as_slice()))
        .max(rel_diff(lo, inst.v_lo.as_slice()))
        .max(rel_diff(hi, inst.v_hi.as_slice()));
    items.push(CheckItem::new("transcription", transcription, tol.transcription));

    let mut scratch = KktScratch::new(data);
    let structured = solve_kkt_system(data, &qp.q, &qp.b, &mut scratch)?;
    let (z_ref, mu_ref) = dense_kkt_solve(&inst, &qp.q, &qp.b).map_err(oracle_err)?;
    let kkt = rel_diff(&structured.z, &z_ref).max(rel_diff(&structured.mu, &mu_ref));
    items.push(CheckItem::new("kkt_solve", kkt, tol.kkt));

    match dense_qp_solve(&inst) {
        Ok(reference) => {
            let mut tight = data.clone();
            tight.set_exit_criteria(tol.admm_exit, tol.admm_exit, tol.admm_max_iter)?;
            let (report, state) = admm_solve(&tight, x_t, x_r, u_r, None)?;
            let mut item = CheckItem::new("admm_vs_dense_qp", rel_diff(&state.v, &reference.z), tol.admm);
            if report.status != SolveStatus::Converged {
                item.passed = false;
            }
            item.note = Some(format!("{:?} after {} iterations", report.status, report.iterations));
            items.push(item);

            let cert = kkt_residuals_scaled(&inst, &reference.z, &reference.mu, &reference.y).map_err(oracle_err)?;
            items.push(CheckItem::new("dense_qp_certificate", cert.max(), 1e-8));
        }
        Err(e) => {
            let mut item = CheckItem::new("admm_vs_dense_qp", f64::INFINITY, tol.admm);
            item.note = Some(format!("dense reference failed: {e}"));
            items.push(item);
        }
    }
    Ok(CheckReport { items })
}

fn oracle_err(e: mpct_core::oracle::OracleError) -> HarnessError {
    match e {
        mpct_core::oracle::OracleError::Problem(p) => HarnessError::Solver(p),
        other => HarnessError::SolverFailed { step: 0, reason: format!("oracle: {other}") },
    }
}
