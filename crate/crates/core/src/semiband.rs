//! Semi-banded linear systems `(Γ + U V) z = d` and the equality-constrained
//! QP solve that produces the ADMM `z`-update.
//!
//! A semi-banded solve costs two structured solves with `Γ`, two low-rank
//! products and one `m × m` dense solve. The dense matrix `I_m + V Γ⁻¹ U` is
//! formed and factored once when the system is built.

use serde::{Deserialize, Serialize};

use crate::banded::StructuredSolve;
use crate::dense::{DenseMatrix, SmallDense};
use crate::error::{check_len, Result};
use crate::problem::PrecomputedData;

/// The low-rank part `U V` of a semi-banded matrix, with `U: n × m`, `V: m × n`.
pub trait LowRank: Send + Sync {
    fn dim(&self) -> usize;

    fn rank(&self) -> usize;

    /// `out = U z` with `z` of length `rank()`.
    fn apply_u(&self, z: &[f64], out: &mut [f64]);

    /// `out = V x` with `x` of length `dim()`.
    fn apply_v(&self, x: &[f64], out: &mut [f64]);
}

/// Explicitly stored factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLowRank {
    u: DenseMatrix,
    v: DenseMatrix,
}

impl DenseLowRank {
    pub fn new(u: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        check_len(u.cols(), v.rows())?;
        check_len(u.rows(), v.cols())?;
        Ok(Self { u, v })
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }
}

impl LowRank for DenseLowRank {
    fn dim(&self) -> usize {
        self.u.rows()
    }

    fn rank(&self) -> usize {
        self.u.cols()
    }

    fn apply_u(&self, z: &[f64], out: &mut [f64]) {
        self.u.matvec_into(z, out);
    }

    fn apply_v(&self, x: &[f64], out: &mut [f64]) {
        self.v.matvec_into(x, out);
    }
}

/// `M = Γ + U V` with `Γ` already factored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiBandedSystem<G, L> {
    gamma: G,
    low_rank: L,
    /// `Γ⁻¹ U`, `n × m`
    gamma_inv_u: DenseMatrix,
    /// `I_m + V Γ⁻¹ U`
    small: SmallDense,
}

/// Workspace for [`SemiBandedSystem::solve_into`].
#[derive(Debug, Clone)]
pub struct SemiBandedScratch {
    z2: Vec<f64>,
    z3: Vec<f64>,
}

impl SemiBandedScratch {
    pub fn new(n: usize, m: usize) -> Self {
        Self { z2: vec![0.0; m], z3: vec![0.0; n] }
    }
}

impl<G: StructuredSolve, L: LowRank> SemiBandedSystem<G, L> {
    /// Precomputes `Γ⁻¹ U` (one structured solve per column) and factors the
    /// small system. Fails with `SingularSmallSystem` when `Γ + U V` is singular.
    pub fn new(gamma: G, low_rank: L) -> Result<Self> {
        let (n, m) = (low_rank.dim(), low_rank.rank());
        check_len(n, gamma.dim())?;
        let mut gamma_inv_u = DenseMatrix::zeros(n, m);
        let mut unit = vec![0.0; m];
        let mut col = vec![0.0; n];
        for j in 0..m {
            unit[j] = 1.0;
            low_rank.apply_u(&unit, &mut col);
            unit[j] = 0.0;
            gamma.solve_in_place(&mut col);
            for (i, c) in col.iter().enumerate() {
                gamma_inv_u[(i, j)] = *c;
            }
        }
        let mut small = DenseMatrix::identity(m);
        let mut vcol = vec![0.0; m];
        for j in 0..m {
            for (i, c) in col.iter_mut().enumerate() {
                *c = gamma_inv_u[(i, j)];
            }
            low_rank.apply_v(&col, &mut vcol);
            for (i, v) in vcol.iter().enumerate() {
                small[(i, j)] += v;
            }
        }
        let small = SmallDense::new(small)?;
        Ok(Self { gamma, low_rank, gamma_inv_u, small })
    }

    pub fn dim(&self) -> usize {
        self.low_rank.dim()
    }

    pub fn rank(&self) -> usize {
        self.low_rank.rank()
    }

    pub fn gamma(&self) -> &G {
        &self.gamma
    }

    pub fn low_rank(&self) -> &L {
        &self.low_rank
    }

    pub fn gamma_inv_u(&self) -> &DenseMatrix {
        &self.gamma_inv_u
    }

    pub fn small(&self) -> &SmallDense {
        &self.small
    }

    pub fn scratch(&self) -> SemiBandedScratch {
        SemiBandedScratch::new(self.dim(), self.rank())
    }

    /// Solves `(Γ + U V) out = d`:
    ///
    /// 1. `Γ z₁ = d`
    /// 2. `(I + V Γ⁻¹ U) z₂ = V z₁`
    /// 3. `Γ z₃ = U z₂`
    ///
    /// and returns `z₁ - z₃` in `out`. No allocation.
    pub fn solve_into(&self, d: &[f64], scratch: &mut SemiBandedScratch, out: &mut [f64]) {
        debug_assert_eq!(d.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        out.copy_from_slice(d);
        self.gamma.solve_in_place(out);
        self.low_rank.apply_v(out, &mut scratch.z2);
        self.small.solve_in_place(&mut scratch.z2);
        self.low_rank.apply_u(&scratch.z2, &mut scratch.z3);
        self.gamma.solve_in_place(&mut scratch.z3);
        for (o, z3) in out.iter_mut().zip(&scratch.z3) {
            *o -= z3;
        }
    }

    pub fn solve(&self, d: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), d.len())?;
        let mut out = vec![0.0; self.dim()];
        self.solve_into(d, &mut self.scratch(), &mut out);
        Ok(out)
    }
}

pub fn solve_semibanded<G: StructuredSolve, L: LowRank>(
    sys: &SemiBandedSystem<G, L>,
    d: &[f64],
    scratch: &mut SemiBandedScratch,
) -> Result<Vec<f64>> {
    check_len(sys.dim(), d.len())?;
    let mut out = vec![0.0; sys.dim()];
    sys.solve_into(d, scratch, &mut out);
    Ok(out)
}

/// Solution of the equality-constrained QP `min ½ zᵀ P z + pᵀ z  s.t.  G z = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub z: Vec<f64>,
    /// Multiplier of `G z = b`.
    pub mu: Vec<f64>,
}

/// Workspace for [`solve_kkt_into`]; sized once per problem.
#[derive(Debug, Clone)]
pub struct KktScratch {
    p_sys: SemiBandedScratch,
    w_sys: SemiBandedScratch,
    xi: Vec<f64>,
    rhs_w: Vec<f64>,
    rhs_p: Vec<f64>,
}

impl KktScratch {
    pub fn new(data: &PrecomputedData) -> Self {
        let (nz, mz) = (data.nz(), data.mz());
        Self {
            p_sys: data.p_system().scratch(),
            w_sys: data.w_system().scratch(),
            xi: vec![0.0; nz],
            rhs_w: vec![0.0; mz],
            rhs_p: vec![0.0; nz],
        }
    }
}

/// Three semi-banded solves:
///
/// ```text
/// P ξ = p
/// W μ = -(G ξ + b)
/// P z = -(Gᵀ μ + p)
/// ```
///
/// with `W = G P⁻¹ Gᵀ`. Writes `z` and `μ`.
pub fn solve_kkt_into(
    data: &PrecomputedData,
    p: &[f64],
    b: &[f64],
    scratch: &mut KktScratch,
    z: &mut [f64],
    mu: &mut [f64],
) {
    let g = data.g();
    data.p_system().solve_into(p, &mut scratch.p_sys, &mut scratch.xi);

    g.apply_into(&scratch.xi, &mut scratch.rhs_w);
    for (r, bi) in scratch.rhs_w.iter_mut().zip(b) {
        *r = -(*r + bi);
    }
    data.w_system().solve_into(&scratch.rhs_w, &mut scratch.w_sys, mu);

    g.apply_transpose_into(mu, &mut scratch.rhs_p);
    for (r, pi) in scratch.rhs_p.iter_mut().zip(p) {
        *r = -(*r + pi);
    }
    data.p_system().solve_into(&scratch.rhs_p, &mut scratch.p_sys, z);
}

pub fn solve_kkt_system(
    data: &PrecomputedData,
    p: &[f64],
    b: &[f64],
    scratch: &mut KktScratch,
) -> Result<KktSolution> {
    check_len(data.nz(), p.len())?;
    check_len(data.mz(), b.len())?;
    let mut z = vec![0.0; data.nz()];
    let mut mu = vec![0.0; data.mz()];
    solve_kkt_into(data, p, b, scratch, &mut z, &mut mu);
    Ok(KktSolution { z, mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::banded::{banded_cholesky_factor, block_diag_factor, BlockDiagMatrix, SymBandedMatrix};

    fn identity_gamma(n: usize) -> crate::banded::BlockDiagFactor {
        let blocks = (0..n).map(|_| DenseMatrix::identity(1)).collect();
        block_diag_factor(&BlockDiagMatrix::new(blocks).unwrap()).unwrap()
    }

    #[test]
    fn zero_low_rank_reduces_to_plain_solve() {
        let dense = DenseMatrix::from_rows(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 2.0]]).unwrap();
        let gamma = banded_cholesky_factor(&SymBandedMatrix::from_dense(&dense, 1).unwrap()).unwrap();
        let lr = DenseLowRank::new(DenseMatrix::zeros(3, 2), DenseMatrix::from_fn(2, 3, |i, j| (i + j) as f64))
            .unwrap();
        let d = [1.0, 2.0, 3.0];
        let expected = gamma.solve(&d).unwrap();
        let sys = SemiBandedSystem::new(gamma, lr).unwrap();
        let z = solve_semibanded(&sys, &d, &mut sys.scratch()).unwrap();
        for (a, b) in z.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rank_one_analytic() {
        let mut e1 = DenseMatrix::zeros(4, 1);
        e1[(0, 0)] = 1.0;
        let lr = DenseLowRank::new(e1.clone(), e1.transpose()).unwrap();
        let sys = SemiBandedSystem::new(identity_gamma(4), lr).unwrap();
        let z = sys.solve(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(z, vec![0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn singular_sum_detected() {
        // I - e1 e1^T is singular
        let mut e1 = DenseMatrix::zeros(3, 1);
        e1[(0, 0)] = 1.0;
        let lr = DenseLowRank::new(e1.scaled(-1.0), e1.transpose()).unwrap();
        assert_eq!(
            SemiBandedSystem::new(identity_gamma(3), lr).unwrap_err(),
            crate::Error::SingularSmallSystem
        );
    }

    #[test]
    fn dimension_checked() {
        let lr = DenseLowRank::new(DenseMatrix::zeros(3, 1), DenseMatrix::zeros(1, 3)).unwrap();
        let sys = SemiBandedSystem::new(identity_gamma(3), lr).unwrap();
        assert!(sys.solve(&[1.0, 2.0]).is_err());
        assert!(SemiBandedSystem::new(
            identity_gamma(2),
            DenseLowRank::new(DenseMatrix::zeros(3, 1), DenseMatrix::zeros(1, 3)).unwrap()
        )
        .is_err());
    }
}
