//! Solver for MPC for tracking (MPCT) based on ADMM.
//!
//! The equality-constrained QP solved at every ADMM iteration has a Hessian
//! and a dual Schur complement that are "semi-banded": banded (or block
//! diagonal) plus a low-rank term coming from the artificial reference. Both
//! are solved with the Woodbury identity on top of banded Cholesky
//! factorizations computed once, offline.
//!
//! ```no_run
//! use mpct_core::{admm_solve, build_problem, DenseMatrix, LtiModel, MpctParams};
//!
//! let one = DenseMatrix::identity(1);
//! let model = LtiModel::new(one.clone(), one.clone(), vec![-1.0], vec![1.0], vec![-0.5], vec![0.5]).unwrap();
//! let params = MpctParams::new(one.clone(), one.clone(), one.clone(), one, 10, 1.0);
//! let data = build_problem(&model, &params).unwrap();
//! let (report, _state) = admm_solve(&data, &[0.5], &[0.8], &[0.0], None).unwrap();
//! println!("u(t) = {:?}", report.control_action);
//! ```

// `!(x > 0.0)` is used deliberately so NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod banded;
pub mod dense;
mod error;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod problem;
pub mod problem_file;
pub mod semiband;

pub use admm::{admm_solve, residuals, v_update, AdmmState, AdmmWorkspace, SolveReport, SolveStatus};
pub use banded::{
    banded_cholesky_factor, banded_solve, block_diag_factor, block_diag_solve, g_matvec, gt_matvec,
    BandedCholeskyFactor, BlockDiagFactor, BlockDiagMatrix, PredictionSparseMatrix, StructuredSolve,
    SymBandedMatrix,
};
pub use dense::{DenseMatrix, SmallDense};
pub use error::{CostMatrix, Error, Result};
pub use problem::{
    assemble_online, build_problem, build_problem_with_scaling, tightened_bounds, LtiModel, MpctParams,
    PrecomputedData, QpVectors, Scaling, ToleranceMode,
};
pub use semiband::{
    solve_kkt_system, solve_semibanded, DenseLowRank, KktScratch, KktSolution, LowRank, SemiBandedSystem,
};
