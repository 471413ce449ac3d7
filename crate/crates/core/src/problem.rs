//! Transcription of the tracking problem into ADMM data and the offline
//! factorization phase.
//!
//! Decision vector ordering:
//!
//! ```text
//! z = (x_0, u_0, x_1, u_1, ..., x_{N-1}, u_{N-1}, x_s, u_s)
//! ```
//!
//! so `n_z = (N + 1)(n_x + n_u)` and the equality constraints `G z = b` have
//! `m_z = (N + 2) n_x` rows. The Hessian `P = H + ρI` is split as
//! `Γ̂ + Û V̂` with `Γ̂` block diagonal and a rank `2 (n_x + n_u)` coupling
//! between every stage and the artificial reference `(x_s, u_s)`; the dual
//! Schur complement `W = G P⁻¹ Gᵀ` is split as `Γ̃ + Ũ Ṽ` with `Γ̃` banded.

use serde::{Deserialize, Serialize};

use crate::banded::{
    banded_cholesky_factor, block_diag_factor, BandedCholeskyFactor, BlockDiagFactor, BlockDiagMatrix,
    PredictionSparseMatrix, StructuredSolve, SymBandedMatrix,
};
use crate::dense::DenseMatrix;
use crate::error::{check_len, CostMatrix, Error, Result};
use crate::semiband::{DenseLowRank, LowRank, SemiBandedSystem};

/// Discrete-time plant `x⁺ = A x + B u` with box constraints on states and inputs.
///
/// Bounds may contain infinite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiModel {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    #[serde(with = "crate::problem_file::bound_vec")]
    pub x_lo: Vec<f64>,
    #[serde(with = "crate::problem_file::bound_vec")]
    pub x_hi: Vec<f64>,
    #[serde(with = "crate::problem_file::bound_vec")]
    pub u_lo: Vec<f64>,
    #[serde(with = "crate::problem_file::bound_vec")]
    pub u_hi: Vec<f64>,
}

impl LtiModel {
    pub fn new(
        a: DenseMatrix,
        b: DenseMatrix,
        x_lo: Vec<f64>,
        x_hi: Vec<f64>,
        u_lo: Vec<f64>,
        u_hi: Vec<f64>,
    ) -> Result<Self> {
        let model = Self { a, b, x_lo, x_hi, u_lo, u_hi };
        model.validate()?;
        Ok(model)
    }

    pub fn nx(&self) -> usize {
        self.a.rows()
    }

    pub fn nu(&self) -> usize {
        self.b.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let nx = self.nx();
        check_len(nx, self.a.cols())?;
        check_len(nx, self.b.rows())?;
        check_len(nx, self.x_lo.len())?;
        check_len(nx, self.x_hi.len())?;
        check_len(self.nu(), self.u_lo.len())?;
        check_len(self.nu(), self.u_hi.len())?;
        if nx == 0 || self.nu() == 0 {
            return Err(Error::InvalidParameter("model needs at least one state and one input".into()));
        }
        if !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::NonFiniteInput("model matrices"));
        }
        check_box("state", &self.x_lo, &self.x_hi)?;
        check_box("input", &self.u_lo, &self.u_hi)
    }

    /// `A x + B u`
    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut next = self.a.matvec(x);
        self.b.matvec_acc(1.0, u, &mut next);
        next
    }
}

fn check_box(block: &'static str, lo: &[f64], hi: &[f64]) -> Result<()> {
    for (index, (l, h)) in lo.iter().zip(hi).enumerate() {
        if l.is_nan() || h.is_nan() || !(l < h) || *l == f64::INFINITY || *h == f64::NEG_INFINITY {
            return Err(Error::InvalidBounds { block, index });
        }
    }
    Ok(())
}

/// How the exit test compares residuals against `eps_primal` / `eps_dual`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceMode {
    /// `‖z - v‖∞ ≤ ε_p` and `‖v⁺ - v‖∞ ≤ ε_d`.
    #[default]
    Absolute,
    /// Both tolerances multiplied by `max(1, ‖v‖∞)`.
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpctParams {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    pub t: DenseMatrix,
    pub s: DenseMatrix,
    pub horizon: usize,
    /// Tightening of the artificial-reference bounds.
    pub epsilon: f64,
    pub rho: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub tolerance_mode: ToleranceMode,
}

impl MpctParams {
    pub const DEFAULT_EPSILON: f64 = 1e-6;
    pub const DEFAULT_TOLERANCE: f64 = 1e-4;
    pub const DEFAULT_MAX_ITER: usize = 4000;

    pub fn new(q: DenseMatrix, r: DenseMatrix, t: DenseMatrix, s: DenseMatrix, horizon: usize, rho: f64) -> Self {
        Self {
            q,
            r,
            t,
            s,
            horizon,
            epsilon: Self::DEFAULT_EPSILON,
            rho,
            eps_primal: Self::DEFAULT_TOLERANCE,
            eps_dual: Self::DEFAULT_TOLERANCE,
            max_iter: Self::DEFAULT_MAX_ITER,
            tolerance_mode: ToleranceMode::Absolute,
        }
    }

    pub fn validate(&self, nx: usize, nu: usize) -> Result<()> {
        for (m, which, dim) in
            [(&self.q, CostMatrix::Q, nx), (&self.r, CostMatrix::R, nu), (&self.t, CostMatrix::T, nx), (&self.s, CostMatrix::S, nu)]
        {
            check_len(dim, m.rows())?;
            check_len(dim, m.cols())?;
            if !m.is_finite() || !m.is_symmetric(1e-12) || m.cholesky().is_err() {
                return Err(Error::CostNotPositiveDefinite(which));
            }
        }
        if self.horizon < 2 {
            return Err(Error::InvalidParameter(format!("horizon must be at least 2, got {}", self.horizon)));
        }
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("rho", self.rho),
            ("eps_primal", self.eps_primal),
            ("eps_dual", self.eps_dual),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Diagonal change of variables `x = D_x x̂`, `u = D_u û` applied before
/// transcription. The identity scaling leaves the problem untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub state: Vec<f64>,
    pub input: Vec<f64>,
}

impl Scaling {
    pub fn identity(nx: usize, nu: usize) -> Self {
        Self { state: vec![1.0; nx], input: vec![1.0; nu] }
    }

    pub fn is_identity(&self) -> bool {
        self.state.iter().chain(&self.input).all(|&d| d == 1.0)
    }

    fn validate(&self, nx: usize, nu: usize) -> Result<()> {
        check_len(nx, self.state.len())?;
        check_len(nu, self.input.len())?;
        if self.state.iter().chain(&self.input).any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidParameter("scaling factors must be positive and finite".into()));
        }
        Ok(())
    }

    /// Model and costs expressed in the scaled variables.
    pub fn apply(&self, model: &LtiModel, params: &MpctParams) -> Result<(LtiModel, MpctParams)> {
        self.validate(model.nx(), model.nu())?;
        let (dx, du) = (&self.state, &self.input);
        let a = DenseMatrix::from_fn(model.nx(), model.nx(), |i, j| model.a[(i, j)] * dx[j] / dx[i]);
        let b = DenseMatrix::from_fn(model.nx(), model.nu(), |i, j| model.b[(i, j)] * du[j] / dx[i]);
        let div = |v: &[f64], d: &[f64]| v.iter().zip(d).map(|(v, d)| v / d).collect::<Vec<_>>();
        let scaled_model = LtiModel {
            a,
            b,
            x_lo: div(&model.x_lo, dx),
            x_hi: div(&model.x_hi, dx),
            u_lo: div(&model.u_lo, du),
            u_hi: div(&model.u_hi, du),
        };
        let congruence = |m: &DenseMatrix, d: &[f64]| DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| d[i] * m[(i, j)] * d[j]);
        let scaled_params = MpctParams {
            q: congruence(&params.q, dx),
            r: congruence(&params.r, du),
            t: congruence(&params.t, dx),
            s: congruence(&params.s, du),
            ..params.clone()
        };
        Ok((scaled_model, scaled_params))
    }
}

/// Per-solve vectors: linear cost, equality right-hand side and box bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpVectors {
    pub q: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(with = "crate::problem_file::bound_vec")]
    pub v_lo: Vec<f64>,
    #[serde(with = "crate::problem_file::bound_vec")]
    pub v_hi: Vec<f64>,
}

/// Stacked box bounds of the copy variable `v`.
///
/// The initial state `x_0` is pinned by `x_0 = x(t)` and carries no box;
/// stages `1..N-1` use the plant bounds, all inputs `u_0..u_{N-1}` use the
/// input bounds, and `(x_s, u_s)` use the bounds tightened by `epsilon`.
/// Infinite entries stay infinite.
pub fn tightened_bounds(model: &LtiModel, params: &MpctParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let (nx, nu, n) = (model.nx(), model.nu(), params.horizon);
    let eps = params.epsilon;
    let nz = (n + 1) * (nx + nu);
    let mut lo = Vec::with_capacity(nz);
    let mut hi = Vec::with_capacity(nz);
    for i in 0..n {
        if i == 0 {
            lo.extend(std::iter::repeat_n(f64::NEG_INFINITY, nx));
            hi.extend(std::iter::repeat_n(f64::INFINITY, nx));
        } else {
            lo.extend_from_slice(&model.x_lo);
            hi.extend_from_slice(&model.x_hi);
        }
        lo.extend_from_slice(&model.u_lo);
        hi.extend_from_slice(&model.u_hi);
    }
    for (block, l, h) in [("state", &model.x_lo, &model.x_hi), ("input", &model.u_lo, &model.u_hi)] {
        for (index, (&l, &h)) in l.iter().zip(h.iter()).enumerate() {
            let (lt, ht) = (l + eps, h - eps);
            if !(lt < ht) {
                return Err(Error::EmptyTightenedBox { block, index });
            }
            lo.push(lt);
            hi.push(ht);
        }
    }
    Ok((lo, hi))
}

/// The low-rank coupling `Û V̂` of `P`, kept in structured form.
///
/// With `Y = -𝟙_Nᵀ ⊗ diag(Q, R)`:
///
/// ```text
/// Û = [ Yᵀ  0 ]      V̂ = [ 0  I ]
///     [ 0   I ]          [ Y  0 ]
/// ```
///
/// so `Û V̂` places `-Q`, `-R` between every stage and `(x_s, u_s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingFactors {
    nx: usize,
    nu: usize,
    horizon: usize,
    q: DenseMatrix,
    r: DenseMatrix,
}

impl CouplingFactors {
    fn stage(&self) -> usize {
        self.nx + self.nu
    }

    /// `out = -diag(Q, R) w`
    fn neg_stage_cost(&self, w: &[f64], out: &mut [f64]) {
        let nx = self.nx;
        self.q.matvec_into(&w[..nx], &mut out[..nx]);
        self.r.matvec_into(&w[nx..], &mut out[nx..]);
        out.iter_mut().for_each(|o| *o = -*o);
    }

    pub fn to_dense_u(&self) -> DenseMatrix {
        let n = self.stage();
        let mut out = DenseMatrix::zeros(self.dim(), 2 * n);
        let mut unit = vec![0.0; 2 * n];
        let mut col = vec![0.0; self.dim()];
        for j in 0..2 * n {
            unit[j] = 1.0;
            self.apply_u(&unit, &mut col);
            unit[j] = 0.0;
            for (i, c) in col.iter().enumerate() {
                out[(i, j)] = *c;
            }
        }
        out
    }

    pub fn to_dense_v(&self) -> DenseMatrix {
        let n = self.stage();
        let mut out = DenseMatrix::zeros(2 * n, self.dim());
        for r in 0..n {
            out[(r, self.horizon * n + r)] = 1.0;
        }
        for i in 0..self.horizon {
            for r in 0..self.nx {
                for c in 0..self.nx {
                    out[(n + r, i * n + c)] = -self.q[(r, c)];
                }
            }
            for r in 0..self.nu {
                for c in 0..self.nu {
                    out[(n + self.nx + r, i * n + self.nx + c)] = -self.r[(r, c)];
                }
            }
        }
        out
    }
}

impl LowRank for CouplingFactors {
    fn dim(&self) -> usize {
        (self.horizon + 1) * self.stage()
    }

    fn rank(&self) -> usize {
        2 * self.stage()
    }

    fn apply_u(&self, z: &[f64], out: &mut [f64]) {
        let n = self.stage();
        let (za, zb) = z.split_at(n);
        let (stages, last) = out.split_at_mut(self.horizon * n);
        self.neg_stage_cost(za, &mut stages[..n]);
        let (first, rest) = stages.split_at_mut(n);
        for chunk in rest.chunks_exact_mut(n) {
            chunk.copy_from_slice(first);
        }
        last.copy_from_slice(zb);
    }

    fn apply_v(&self, x: &[f64], out: &mut [f64]) {
        let n = self.stage();
        let (stages, last) = x.split_at(self.horizon * n);
        let (top, bottom) = out.split_at_mut(n);
        top.copy_from_slice(last);
        // Y x = -diag(Q, R) Σ_i (x_i, u_i)
        let mut sum = [0.0f64; 64];
        let mut heap;
        let acc: &mut [f64] = if n <= sum.len() {
            &mut sum[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        for chunk in stages.chunks_exact(n) {
            for (a, c) in acc.iter_mut().zip(chunk) {
                *a += c;
            }
        }
        self.neg_stage_cost(acc, bottom);
    }
}

pub type PSystem = SemiBandedSystem<BlockDiagFactor, CouplingFactors>;
pub type WSystem = SemiBandedSystem<BandedCholeskyFactor, DenseLowRank>;

/// Everything the online iterations need. Immutable after [`build_problem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecomputedData {
    /// Model and parameters in solver coordinates (after scaling).
    model: LtiModel,
    params: MpctParams,
    scaling: Option<Scaling>,
    g: PredictionSparseMatrix,
    #[serde(with = "crate::problem_file::bound_vec")]
    v_lo: Vec<f64>,
    #[serde(with = "crate::problem_file::bound_vec")]
    v_hi: Vec<f64>,
    gamma_hat: BlockDiagMatrix,
    gamma_tilde: SymBandedMatrix,
    p_system: PSystem,
    w_system: WSystem,
}

impl PrecomputedData {
    pub fn nx(&self) -> usize {
        self.model.nx()
    }

    pub fn nu(&self) -> usize {
        self.model.nu()
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    pub fn nz(&self) -> usize {
        self.g.cols()
    }

    pub fn mz(&self) -> usize {
        self.g.rows()
    }

    /// Width of the low-rank terms, `2 (n_x + n_u)`.
    pub fn low_rank_width(&self) -> usize {
        2 * (self.nx() + self.nu())
    }

    pub fn rho(&self) -> f64 {
        self.params.rho
    }

    /// Model in solver coordinates.
    pub fn model(&self) -> &LtiModel {
        &self.model
    }

    /// Parameters in solver coordinates.
    pub fn params(&self) -> &MpctParams {
        &self.params
    }

    pub fn scaling(&self) -> Option<&Scaling> {
        self.scaling.as_ref()
    }

    pub fn g(&self) -> &PredictionSparseMatrix {
        &self.g
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.v_lo, &self.v_hi)
    }

    pub fn p_system(&self) -> &PSystem {
        &self.p_system
    }

    pub fn w_system(&self) -> &WSystem {
        &self.w_system
    }

    pub fn gamma_hat(&self) -> &BlockDiagMatrix {
        &self.gamma_hat
    }

    pub fn gamma_tilde(&self) -> &SymBandedMatrix {
        &self.gamma_tilde
    }

    /// Replace the exit settings without touching the factorizations.
    pub fn set_exit_criteria(&mut self, eps_primal: f64, eps_dual: f64, max_iter: usize) -> Result<()> {
        let mut params = self.params.clone();
        params.eps_primal = eps_primal;
        params.eps_dual = eps_dual;
        params.max_iter = max_iter;
        params.validate(self.nx(), self.nu())?;
        self.params = params;
        Ok(())
    }

    pub fn set_tolerance_mode(&mut self, mode: ToleranceMode) {
        self.params.tolerance_mode = mode;
    }

    pub fn scale_state(&self, x: &[f64]) -> Vec<f64> {
        match &self.scaling {
            Some(s) => x.iter().zip(&s.state).map(|(x, d)| x / d).collect(),
            None => x.to_vec(),
        }
    }

    pub fn scale_input(&self, u: &[f64]) -> Vec<f64> {
        match &self.scaling {
            Some(s) => u.iter().zip(&s.input).map(|(u, d)| u / d).collect(),
            None => u.to_vec(),
        }
    }

    pub fn unscale_state(&self, x: &[f64]) -> Vec<f64> {
        match &self.scaling {
            Some(s) => x.iter().zip(&s.state).map(|(x, d)| x * d).collect(),
            None => x.to_vec(),
        }
    }

    pub fn unscale_input(&self, u: &[f64]) -> Vec<f64> {
        match &self.scaling {
            Some(s) => u.iter().zip(&s.input).map(|(u, d)| u * d).collect(),
            None => u.to_vec(),
        }
    }

    /// Writes `q` and `b` for the given (solver-coordinate) state and reference.
    pub(crate) fn assemble_into(&self, x_t: &[f64], x_r: &[f64], u_r: &[f64], q: &mut [f64], b: &mut [f64]) {
        let (nx, nu) = (self.nx(), self.nu());
        let nz = self.nz();
        q.iter_mut().for_each(|v| *v = 0.0);
        let tail = &mut q[nz - nx - nu..];
        self.params.t.matvec_into(x_r, &mut tail[..nx]);
        self.params.s.matvec_into(u_r, &mut tail[nx..]);
        tail.iter_mut().for_each(|v| *v = -*v);
        b.iter_mut().for_each(|v| *v = 0.0);
        b[..nx].copy_from_slice(x_t);
    }

    /// Dense `H` rebuilt from `Γ̂ + Û V̂ - ρI`. Test and diagnostics use only.
    pub fn hessian_dense(&self) -> DenseMatrix {
        let uv = self.p_system.low_rank().to_dense_u().matmul(&self.p_system.low_rank().to_dense_v());
        self.gamma_hat.to_dense().add(&uv).add_diagonal(-self.rho())
    }

    /// Dense `G` obtained by probing the structured operator. Test and diagnostics use only.
    pub fn constraint_dense(&self) -> DenseMatrix {
        let (mz, nz) = (self.mz(), self.nz());
        let mut out = DenseMatrix::zeros(mz, nz);
        let mut unit = vec![0.0; nz];
        let mut col = vec![0.0; mz];
        for j in 0..nz {
            unit[j] = 1.0;
            self.g.apply_into(&unit, &mut col);
            unit[j] = 0.0;
            for (i, c) in col.iter().enumerate() {
                out[(i, j)] = *c;
            }
        }
        out
    }

    /// Dense `Γ̃ + Ũ Ṽ`. Test and diagnostics use only.
    pub fn schur_dense(&self) -> DenseMatrix {
        let lr = self.w_system.low_rank();
        self.gamma_tilde.to_dense().add(&lr.u().matmul(lr.v()))
    }
}

/// Offline phase with no scaling.
pub fn build_problem(model: &LtiModel, params: &MpctParams) -> Result<PrecomputedData> {
    build_problem_with_scaling(model, params, None)
}

/// Validates, optionally rescales, and computes every factorization the
/// iterations need: `Γ̂`, `I + V̂ Γ̂⁻¹ Û`, the banded Cholesky factor of
/// `Γ̃ = G Γ̂⁻¹ Gᵀ`, the dense `Ũ`, `Ṽ` and `I + Ṽ Γ̃⁻¹ Ũ`.
pub fn build_problem_with_scaling(
    model: &LtiModel,
    params: &MpctParams,
    scaling: Option<&Scaling>,
) -> Result<PrecomputedData> {
    model.validate()?;
    params.validate(model.nx(), model.nu())?;
    let scaling = scaling.filter(|s| !s.is_identity()).cloned();
    let (model, params) = match &scaling {
        Some(s) => s.apply(model, params)?,
        None => (model.clone(), params.clone()),
    };
    let (nx, nu, n) = (model.nx(), model.nu(), params.horizon);
    let rho = params.rho;

    let (v_lo, v_hi) = tightened_bounds(&model, &params)?;
    let g = PredictionSparseMatrix::new(model.a.clone(), model.b.clone(), n)?;

    let mut blocks = Vec::with_capacity(2 * (n + 1));
    for _ in 0..n {
        blocks.push(params.q.add_diagonal(rho));
        blocks.push(params.r.add_diagonal(rho));
    }
    let nf = n as f64;
    blocks.push(params.q.scaled(nf).add(&params.t).add_diagonal(rho));
    blocks.push(params.r.scaled(nf).add(&params.s).add_diagonal(rho));
    let gamma_hat = BlockDiagMatrix::new(blocks)?;
    let gamma_hat_factor = block_diag_factor(&gamma_hat)?;
    let block_inverses = gamma_hat_factor.block_inverses();

    let coupling = CouplingFactors { nx, nu, horizon: n, q: params.q.clone(), r: params.r.clone() };
    let v_hat = coupling.to_dense_v();
    let p_system = SemiBandedSystem::new(gamma_hat_factor, coupling)?;

    let gamma_tilde = gram_banded(&g, &block_inverses, nx, nu)?;
    let gamma_tilde_factor =
        banded_cholesky_factor(&gamma_tilde).map_err(|e| match e {
            Error::NotPositiveDefinite { row } => Error::RankDeficientG { row },
            other => other,
        })?;

    let (mz, m) = (g.rows(), p_system.rank());
    // Ũ = -G Γ̂⁻¹ Û (I + V̂ Γ̂⁻¹ Û)⁻¹
    let gamma_inv_u = p_system.gamma_inv_u();
    let mut g_gamma_inv_u = DenseMatrix::zeros(mz, m);
    let mut col = vec![0.0; gamma_inv_u.rows()];
    let mut gcol = vec![0.0; mz];
    for j in 0..m {
        for (i, c) in col.iter_mut().enumerate() {
            *c = gamma_inv_u[(i, j)];
        }
        g.apply_into(&col, &mut gcol);
        for (i, v) in gcol.iter().enumerate() {
            g_gamma_inv_u[(i, j)] = *v;
        }
    }
    let u_tilde = g_gamma_inv_u.matmul(&p_system.small().lu().inverse()).scaled(-1.0);
    // Ṽ = V̂ Γ̂⁻¹ Gᵀ, row r is (G Γ̂⁻¹ V̂ᵀ e_r)ᵀ
    let mut v_tilde = DenseMatrix::zeros(m, mz);
    for r in 0..m {
        col.copy_from_slice(v_hat.row(r));
        p_system.gamma().solve_in_place(&mut col);
        g.apply_into(&col, &mut gcol);
        for (j, v) in gcol.iter().enumerate() {
            v_tilde[(r, j)] = *v;
        }
    }
    let w_system = SemiBandedSystem::new(gamma_tilde_factor, DenseLowRank::new(u_tilde, v_tilde)?)?;

    Ok(PrecomputedData {
        model,
        params,
        scaling,
        g,
        v_lo,
        v_hi,
        gamma_hat,
        gamma_tilde,
        p_system,
        w_system,
    })
}

/// `G D Gᵀ` for the block-diagonal `D` whose blocks are, in order,
/// `(x_0, u_0, x_1, u_1, ..., x_s, u_s)`-sized.
fn gram_banded(g: &PredictionSparseMatrix, d_blocks: &[DenseMatrix], nx: usize, nu: usize) -> Result<SymBandedMatrix> {
    let stage = nx + nu;
    let block_of = |offset: usize| -> usize {
        let (s, within) = (offset / stage, offset % stage);
        2 * s + usize::from(within >= nx)
    };
    let row_blocks = g.rows() / nx;
    let mut out = SymBandedMatrix::zeros(g.rows(), g.gram_half_bandwidth())?;
    let rows: Vec<_> = (0..row_blocks).map(|i| g.row_blocks(i)).collect();
    for i in 0..row_blocks {
        for j in i.saturating_sub(1)..=i {
            for (ci, gi) in &rows[i] {
                for (cj, gj) in &rows[j] {
                    if ci != cj {
                        continue;
                    }
                    let contrib = gi.matmul(&d_blocks[block_of(*ci)]).matmul(&gj.transpose());
                    for r in 0..nx {
                        for c in 0..nx {
                            let (gr, gc) = (i * nx + r, j * nx + c);
                            if gr >= gc {
                                out.add_to(gr, gc, contrib[(r, c)]);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Builds the per-solve vectors from the current state and the reference,
/// all in the user's (unscaled) coordinates.
pub fn assemble_online(data: &PrecomputedData, x_t: &[f64], x_r: &[f64], u_r: &[f64]) -> Result<QpVectors> {
    check_len(data.nx(), x_t.len())?;
    check_len(data.nx(), x_r.len())?;
    check_len(data.nu(), u_r.len())?;
    for (name, v) in [("x_t", x_t), ("x_r", x_r), ("u_r", u_r)] {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput(name));
        }
    }
    let mut q = vec![0.0; data.nz()];
    let mut b = vec![0.0; data.mz()];
    data.assemble_into(&data.scale_state(x_t), &data.scale_state(x_r), &data.scale_input(u_r), &mut q, &mut b);
    let (lo, hi) = data.bounds();
    Ok(QpVectors { q, b, v_lo: lo.to_vec(), v_hi: hi.to_vec() })
}
