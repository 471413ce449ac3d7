//! Dense reference implementations used to verify the structured solver.
//!
//! Nothing here touches the banded kernels, the semi-banded solves or the
//! structured `G` operator: the QP matrices are rebuilt densely from the
//! model and cost matrices, and all linear algebra goes through nalgebra.
//! Only practical for small problems (`n_z` up to a few hundred).

pub mod random;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dense::DenseMatrix;
use crate::problem::{LtiModel, MpctParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("dense KKT matrix is singular")]
    SingularKkt,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dense QP solve did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("problem is infeasible")]
    Infeasible,
    #[error(transparent)]
    Problem(#[from] crate::Error),
}

pub type OracleResult<T> = std::result::Result<T, OracleError>;

fn check(expected: usize, found: usize) -> OracleResult<()> {
    if expected == found {
        Ok(())
    } else {
        Err(OracleError::DimensionMismatch { expected, found })
    }
}

fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Dense `min ½ zᵀ H z + qᵀ z  s.t.  G z = b, v_lo ≤ z ≤ v_hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQpInstance {
    pub h: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub q: DVector<f64>,
    pub b: DVector<f64>,
    pub v_lo: DVector<f64>,
    pub v_hi: DVector<f64>,
    /// ADMM penalty; `P = H + ρI` for the KKT solve.
    pub rho: f64,
}

impl DenseQpInstance {
    /// Writes out the tracking QP entry by entry.
    pub fn from_problem(
        model: &LtiModel,
        params: &MpctParams,
        x_t: &[f64],
        x_r: &[f64],
        u_r: &[f64],
    ) -> OracleResult<Self> {
        let (nx, nu, n) = (model.nx(), model.nu(), params.horizon);
        check(nx, x_t.len())?;
        check(nx, x_r.len())?;
        check(nu, u_r.len())?;
        let stage = nx + nu;
        let nz = (n + 1) * stage;
        let mz = (n + 2) * nx;
        let xs = n * stage;
        let us = xs + nx;
        let (q_cost, r_cost, t_cost, s_cost) = (to_na(&params.q), to_na(&params.r), to_na(&params.t), to_na(&params.s));

        // Σ_i ‖x_i - x_s‖²_Q + ‖u_i - u_s‖²_R + ‖x_s - x_r‖²_T + ‖u_s - u_r‖²_S, halved
        let mut h = DMatrix::zeros(nz, nz);
        for i in 0..n {
            let (xi, ui) = (i * stage, i * stage + nx);
            for r in 0..nx {
                for c in 0..nx {
                    let v = q_cost[(r, c)];
                    h[(xi + r, xi + c)] += v;
                    h[(xi + r, xs + c)] -= v;
                    h[(xs + r, xi + c)] -= v;
                    h[(xs + r, xs + c)] += v;
                }
            }
            for r in 0..nu {
                for c in 0..nu {
                    let v = r_cost[(r, c)];
                    h[(ui + r, ui + c)] += v;
                    h[(ui + r, us + c)] -= v;
                    h[(us + r, ui + c)] -= v;
                    h[(us + r, us + c)] += v;
                }
            }
        }
        for r in 0..nx {
            for c in 0..nx {
                h[(xs + r, xs + c)] += t_cost[(r, c)];
            }
        }
        for r in 0..nu {
            for c in 0..nu {
                h[(us + r, us + c)] += s_cost[(r, c)];
            }
        }

        let mut q = DVector::zeros(nz);
        let txr = &t_cost * DVector::from_column_slice(x_r);
        let sur = &s_cost * DVector::from_column_slice(u_r);
        for r in 0..nx {
            q[xs + r] = -txr[r];
        }
        for r in 0..nu {
            q[us + r] = -sur[r];
        }

        // x_0 = x(t); x_{i+1} = A x_i + B u_i; x_s = A x_{N-1} + B u_{N-1}; x_s = A x_s + B u_s
        let a = to_na(&model.a);
        let bm = to_na(&model.b);
        let mut g = DMatrix::zeros(mz, nz);
        let mut b = DVector::zeros(mz);
        for r in 0..nx {
            g[(r, r)] = 1.0;
            b[r] = x_t[r];
        }
        for i in 0..n {
            let row = (i + 1) * nx;
            let (xi, ui) = (i * stage, i * stage + nx);
            let next = if i + 1 < n { (i + 1) * stage } else { xs };
            for r in 0..nx {
                for c in 0..nx {
                    g[(row + r, xi + c)] = a[(r, c)];
                }
                for c in 0..nu {
                    g[(row + r, ui + c)] = bm[(r, c)];
                }
                g[(row + r, next + r)] = -1.0;
            }
        }
        let row = (n + 1) * nx;
        for r in 0..nx {
            for c in 0..nx {
                g[(row + r, xs + c)] = a[(r, c)] - if r == c { 1.0 } else { 0.0 };
            }
            for c in 0..nu {
                g[(row + r, us + c)] = bm[(r, c)];
            }
        }

        let mut v_lo = DVector::from_element(nz, f64::NEG_INFINITY);
        let mut v_hi = DVector::from_element(nz, f64::INFINITY);
        for i in 0..n {
            if i >= 1 {
                for r in 0..nx {
                    v_lo[i * stage + r] = model.x_lo[r];
                    v_hi[i * stage + r] = model.x_hi[r];
                }
            }
            for r in 0..nu {
                v_lo[i * stage + nx + r] = model.u_lo[r];
                v_hi[i * stage + nx + r] = model.u_hi[r];
            }
        }
        let eps = params.epsilon;
        for r in 0..nx {
            v_lo[xs + r] = model.x_lo[r] + eps;
            v_hi[xs + r] = model.x_hi[r] - eps;
        }
        for r in 0..nu {
            v_lo[us + r] = model.u_lo[r] + eps;
            v_hi[us + r] = model.u_hi[r] - eps;
        }

        Ok(Self { h, g, q, b, v_lo, v_hi, rho: params.rho })
    }

    pub fn nz(&self) -> usize {
        self.h.nrows()
    }

    pub fn mz(&self) -> usize {
        self.g.nrows()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.q.dot(z)
    }
}

/// Solves `[[P, Gᵀ], [G, 0]] (z, μ) = (-p, b)` with `P = H + ρI` by dense LU.
pub fn dense_kkt_solve(inst: &DenseQpInstance, p: &[f64], b: &[f64]) -> OracleResult<(Vec<f64>, Vec<f64>)> {
    let (nz, mz) = (inst.nz(), inst.mz());
    check(nz, p.len())?;
    check(mz, b.len())?;
    let mut k = DMatrix::zeros(nz + mz, nz + mz);
    k.view_mut((0, 0), (nz, nz)).copy_from(&inst.h);
    for i in 0..nz {
        k[(i, i)] += inst.rho;
    }
    k.view_mut((0, nz), (nz, mz)).copy_from(&inst.g.transpose());
    k.view_mut((nz, 0), (mz, nz)).copy_from(&inst.g);
    let mut rhs = DVector::zeros(nz + mz);
    for i in 0..nz {
        rhs[i] = -p[i];
    }
    for i in 0..mz {
        rhs[nz + i] = b[i];
    }
    let sol = k.lu().solve(&rhs).ok_or(OracleError::SingularKkt)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::SingularKkt);
    }
    Ok((sol.rows(0, nz).iter().copied().collect(), sol.rows(nz, mz).iter().copied().collect()))
}

/// Residuals of the KKT conditions of the box-constrained QP, for a primal
/// `z`, equality multiplier `μ` and bound multiplier `y` (positive on upper,
/// negative on lower bounds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖H z + q + Gᵀ μ + y‖∞`
    pub stationarity: f64,
    /// `‖G z - b‖∞`
    pub equality: f64,
    /// Largest bound violation of `z`.
    pub bound_violation: f64,
    /// Largest `y_j · gap_j` product, or the largest wrong-signed `|y_j|`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.equality).max(self.bound_violation).max(self.complementarity)
    }
}

pub fn kkt_residuals(inst: &DenseQpInstance, z: &[f64], mu: &[f64], y: &[f64]) -> OracleResult<KktResiduals> {
    let z = DVector::from_column_slice(z);
    let mu = DVector::from_column_slice(mu);
    let y = DVector::from_column_slice(y);
    check(inst.nz(), z.len())?;
    check(inst.mz(), mu.len())?;
    check(inst.nz(), y.len())?;
    let stat = &inst.h * &z + &inst.q + inst.g.transpose() * &mu + &y;
    let eq = &inst.g * &z - &inst.b;
    let mut bound_violation = 0.0f64;
    let mut complementarity = 0.0f64;
    for j in 0..inst.nz() {
        let (lo, hi, zj, yj) = (inst.v_lo[j], inst.v_hi[j], z[j], y[j]);
        bound_violation = bound_violation.max(lo - zj).max(zj - hi);
        let c = if yj > 0.0 {
            if hi.is_finite() { yj * (hi - zj).abs() } else { yj }
        } else if yj < 0.0 {
            if lo.is_finite() { -yj * (zj - lo).abs() } else { -yj }
        } else {
            0.0
        };
        complementarity = complementarity.max(c);
    }
    Ok(KktResiduals { stationarity: stat.amax(), equality: eq.amax(), bound_violation, complementarity })
}

/// Same residuals, each divided by the magnitude of the terms it is made of.
pub fn kkt_residuals_scaled(inst: &DenseQpInstance, z: &[f64], mu: &[f64], y: &[f64]) -> OracleResult<KktResiduals> {
    let raw = kkt_residuals(inst, z, mu, y)?;
    let zv = DVector::from_column_slice(z);
    let muv = DVector::from_column_slice(mu);
    let yv = DVector::from_column_slice(y);
    let stat_scale = 1.0
        + (&inst.h * &zv).amax().max(inst.q.amax()).max((inst.g.transpose() * &muv).amax()).max(yv.amax());
    let eq_scale = 1.0 + (&inst.g * &zv).amax().max(inst.b.amax());
    let z_scale = 1.0 + zv.amax();
    Ok(KktResiduals {
        stationarity: raw.stationarity / stat_scale,
        equality: raw.equality / eq_scale,
        bound_violation: raw.bound_violation / z_scale,
        complementarity: raw.complementarity / ((1.0 + yv.amax()) * z_scale),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseQpSolution {
    pub z: Vec<f64>,
    pub mu: Vec<f64>,
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub residuals: KktResiduals,
}

/// Settings of the dense reference solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseQpSettings {
    pub tolerance: f64,
    pub max_iter: usize,
    /// Attempt an active-set polish every this many iterations once the
    /// ADMM residuals are below `polish_threshold`.
    pub polish_every: usize,
    pub polish_threshold: f64,
}

impl Default for DenseQpSettings {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iter: 1_000_000, polish_every: 25, polish_threshold: 1e-5 }
    }
}

/// High-accuracy solution of the full QP: dense ADMM (same splitting as the
/// structured solver, dense LU for the `z`-update) followed by an
/// active-set polish that solves the equality QP on the identified active
/// set exactly. Fails with `NotConverged` when neither reaches the tolerance.
pub fn dense_qp_solve(inst: &DenseQpInstance) -> OracleResult<DenseQpSolution> {
    dense_qp_solve_with(inst, &DenseQpSettings::default())
}

/// Iterations between two samples of the stagnation test.
const INFEASIBILITY_WINDOW: usize = 1000;

pub fn dense_qp_solve_with(inst: &DenseQpInstance, settings: &DenseQpSettings) -> OracleResult<DenseQpSolution> {
    let (nz, mz) = (inst.nz(), inst.mz());
    let rho = inst.rho;
    let mut k = DMatrix::zeros(nz + mz, nz + mz);
    k.view_mut((0, 0), (nz, nz)).copy_from(&inst.h);
    for i in 0..nz {
        k[(i, i)] += rho;
    }
    k.view_mut((0, nz), (nz, mz)).copy_from(&inst.g.transpose());
    k.view_mut((nz, 0), (mz, nz)).copy_from(&inst.g);
    let lu = k.lu();
    if !lu.is_invertible() {
        return Err(OracleError::SingularKkt);
    }

    let mut v = DVector::from_fn(nz, |j, _| 0.0f64.max(inst.v_lo[j]).min(inst.v_hi[j]));
    let mut lambda = DVector::<f64>::zeros(nz);
    let mut z = DVector::<f64>::zeros(nz);
    let mut mu = DVector::<f64>::zeros(mz);
    let mut rhs = DVector::<f64>::zeros(nz + mz);
    let mut last_residual = f64::INFINITY;
    let mut checkpoint = f64::INFINITY;
    for it in 1..=settings.max_iter {
        for i in 0..nz {
            rhs[i] = -(inst.q[i] + lambda[i] - rho * v[i]);
        }
        for i in 0..mz {
            rhs[nz + i] = inst.b[i];
        }
        let sol = lu.solve(&rhs).ok_or(OracleError::SingularKkt)?;
        z.copy_from(&sol.rows(0, nz));
        mu.copy_from(&sol.rows(nz, mz));
        let mut primal = 0.0f64;
        let mut dual = 0.0f64;
        for j in 0..nz {
            let vn = (z[j] + lambda[j] / rho).max(inst.v_lo[j]).min(inst.v_hi[j]);
            dual = dual.max((vn - v[j]).abs());
            primal = primal.max((z[j] - vn).abs());
            lambda[j] += rho * (z[j] - vn);
            v[j] = vn;
        }
        last_residual = primal.max(dual);
        if !last_residual.is_finite() {
            break;
        }
        // iterates frozen with z ≠ v: the affine set misses the box
        if it % INFEASIBILITY_WINDOW == 0 {
            if dual <= settings.tolerance * 1e-2
                && primal > settings.tolerance
                && (checkpoint - primal).abs() <= 1e-6 * primal
            {
                return Err(OracleError::Infeasible);
            }
            checkpoint = primal;
        }
        if last_residual <= settings.polish_threshold && it % settings.polish_every == 0 {
            if let Some(sol) = polish(inst, &v, &lambda, settings.tolerance) {
                return Ok(DenseQpSolution { iterations: it, ..sol });
            }
        }
        if last_residual <= settings.tolerance {
            let zs: Vec<f64> = v.iter().copied().collect();
            let ys: Vec<f64> = lambda.iter().copied().collect();
            let mus: Vec<f64> = mu.iter().copied().collect();
            if let Some(sol) = polish(inst, &v, &lambda, settings.tolerance) {
                return Ok(DenseQpSolution { iterations: it, ..sol });
            }
            let residuals = kkt_residuals(inst, &zs, &mus, &ys)?;
            return Ok(DenseQpSolution {
                objective: inst.objective(&v),
                z: zs,
                mu: mus,
                y: ys,
                iterations: it,
                residuals,
            });
        }
    }
    Err(OracleError::NotConverged { iterations: settings.max_iter, residual: last_residual })
}

/// Active-set polish. The initial guess fixes the variables that sit on a
/// bound with a consistent multiplier sign; the equality QP on that set is
/// solved exactly and the set is refined by primal-dual active-set updates
/// (`c = ρ`). Returns `None` unless some iterate satisfies all KKT
/// conditions to `tol` (relative).
fn polish(inst: &DenseQpInstance, v: &DVector<f64>, lambda: &DVector<f64>, tol: f64) -> Option<DenseQpSolution> {
    const MAX_REFINEMENTS: usize = 30;
    let nz = inst.nz();
    // -1 lower, +1 upper, 0 free
    let mut side: Vec<i8> = (0..nz)
        .map(|j| {
            if v[j] <= inst.v_lo[j] && lambda[j] <= 0.0 {
                -1
            } else if v[j] >= inst.v_hi[j] && lambda[j] >= 0.0 {
                1
            } else {
                0
            }
        })
        .collect();
    let c = inst.rho;
    for _ in 0..MAX_REFINEMENTS {
        let (z, mu, y) = equality_qp(inst, &side)?;
        let scaled = kkt_residuals_scaled(inst, &z, &mu, &y).ok()?;
        if scaled.max() <= tol {
            let residuals = kkt_residuals(inst, &z, &mu, &y).ok()?;
            let zv = DVector::from_column_slice(&z);
            return Some(DenseQpSolution { objective: inst.objective(&zv), z, mu, y, iterations: 0, residuals });
        }
        let next: Vec<i8> = (0..nz)
            .map(|j| {
                if y[j] + c * (z[j] - inst.v_hi[j]) > 0.0 {
                    1
                } else if -y[j] + c * (inst.v_lo[j] - z[j]) > 0.0 {
                    -1
                } else {
                    0
                }
            })
            .collect();
        if next == side {
            return None;
        }
        side = next;
    }
    None
}

/// `min ½ zᵀ H z + qᵀ z  s.t.  G z = b` with the variables marked in `side`
/// fixed at their bound. Returns `(z, μ, y)`.
fn equality_qp(inst: &DenseQpInstance, side: &[i8]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (nz, mz) = (inst.nz(), inst.mz());
    let active: Vec<(usize, f64)> = side
        .iter()
        .enumerate()
        .filter_map(|(j, &s)| match s {
            -1 => Some((j, inst.v_lo[j])),
            1 => Some((j, inst.v_hi[j])),
            _ => None,
        })
        .collect();
    let na = active.len();
    let dim = nz + mz + na;
    let mut k = DMatrix::zeros(dim, dim);
    k.view_mut((0, 0), (nz, nz)).copy_from(&inst.h);
    k.view_mut((0, nz), (nz, mz)).copy_from(&inst.g.transpose());
    k.view_mut((nz, 0), (mz, nz)).copy_from(&inst.g);
    let mut rhs = DVector::zeros(dim);
    for i in 0..nz {
        rhs[i] = -inst.q[i];
    }
    for i in 0..mz {
        rhs[nz + i] = inst.b[i];
    }
    for (a, &(j, bound)) in active.iter().enumerate() {
        k[(j, nz + mz + a)] = 1.0;
        k[(nz + mz + a, j)] = 1.0;
        rhs[nz + mz + a] = bound;
    }
    let sol = match k.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|x| x.is_finite()) => s,
        // degenerate active set: minimum-norm solution
        _ => k.svd(true, true).solve(&rhs, 1e-13).ok()?,
    };
    let z: Vec<f64> = sol.rows(0, nz).iter().copied().collect();
    let mu: Vec<f64> = sol.rows(nz, mz).iter().copied().collect();
    let mut y = vec![0.0; nz];
    for (a, &(j, _)) in active.iter().enumerate() {
        y[j] = sol[nz + mz + a];
    }
    Some((z, mu, y))
}

/// The admissible steady state closest to `(x_r, u_r)`:
///
/// `min ‖x - x_r‖²_T + ‖u - u_r‖²_S  s.t.  x = A x + B u` within the
/// `epsilon`-tightened bounds.
pub fn optimal_steady_state(
    model: &LtiModel,
    params: &MpctParams,
    x_r: &[f64],
    u_r: &[f64],
) -> OracleResult<(Vec<f64>, Vec<f64>)> {
    let (nx, nu) = (model.nx(), model.nu());
    check(nx, x_r.len())?;
    check(nu, u_r.len())?;
    let n = nx + nu;
    let (t, s) = (to_na(&params.t), to_na(&params.s));
    let mut h = DMatrix::zeros(n, n);
    h.view_mut((0, 0), (nx, nx)).copy_from(&t);
    h.view_mut((nx, nx), (nu, nu)).copy_from(&s);
    let mut q = DVector::zeros(n);
    q.rows_mut(0, nx).copy_from(&(-(&t * DVector::from_column_slice(x_r))));
    q.rows_mut(nx, nu).copy_from(&(-(&s * DVector::from_column_slice(u_r))));
    let mut g = DMatrix::zeros(nx, n);
    let a = to_na(&model.a);
    g.view_mut((0, 0), (nx, nx)).copy_from(&(a - DMatrix::identity(nx, nx)));
    g.view_mut((0, nx), (nx, nu)).copy_from(&to_na(&model.b));
    let eps = params.epsilon;
    let v_lo = DVector::from_iterator(n, model.x_lo.iter().chain(&model.u_lo).map(|l| l + eps));
    let v_hi = DVector::from_iterator(n, model.x_hi.iter().chain(&model.u_hi).map(|h| h - eps));
    if v_lo.iter().zip(v_hi.iter()).any(|(l, h)| !(l < h)) {
        return Err(OracleError::Infeasible);
    }
    let scale = h.amax().max(1.0);
    let inst = DenseQpInstance { h, g, q, b: DVector::zeros(nx), v_lo, v_hi, rho: scale };
    match dense_qp_solve(&inst) {
        Ok(sol) => Ok((sol.z[..nx].to_vec(), sol.z[nx..].to_vec())),
        Err(OracleError::NotConverged { .. }) | Err(OracleError::SingularKkt) => Err(OracleError::Infeasible),
        Err(e) => Err(e),
    }
}
