#![cfg(feature = "oracle")]

mod common;

use common::*;
use mpct_core::oracle::random::{random_problem, shape_admits_full_row_rank};
use mpct_core::oracle::DenseQpInstance;
use mpct_core::{
    banded_cholesky_factor, banded_solve, block_diag_factor, block_diag_solve, build_problem, g_matvec, gt_matvec,
    BlockDiagMatrix, DenseMatrix, PredictionSparseMatrix, SymBandedMatrix,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn banded_solve_matches_dense(seed in any::<u64>(), n in 1usize..200, bw in 0usize..10) {
        let bw = bw.min(n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_banded_spd(&mut rng, n, bw);
        let d = random_vec(&mut rng, n);
        let l = banded_cholesky_factor(&m).unwrap();
        let x = banded_solve(&l, &d).unwrap();
        let expected = dense_solve(&m.to_dense(), &d);
        prop_assert!(rel_err(&x, &expected) < 1e-12);
        // residual contract
        let r = m.matvec(&x).unwrap();
        prop_assert!(rel_err(&r, &d) < 1e-12);
    }

    #[test]
    fn banded_factor_reconstructs(seed in any::<u64>(), n in 1usize..60, bw in 0usize..8) {
        let bw = bw.min(n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_banded_spd(&mut rng, n, bw);
        let l = banded_cholesky_factor(&m).unwrap().to_dense_lower();
        let llt = l.matmul(&l.transpose());
        prop_assert!(llt.max_abs_diff(&m.to_dense()) < 1e-12 * m.max_diagonal());
        for i in 0..n {
            for j in 0..n {
                if i < j || i > j + bw {
                    prop_assert_eq!(l[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn scalar_blocks_agree_with_diagonal_band(diag in prop::collection::vec(0.1f64..10.0, 1..40), seed in any::<u64>()) {
        let n = diag.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_vec(&mut rng, n);
        let blocks = diag.iter().map(|v| DenseMatrix::from_diagonal(&[*v])).collect();
        let bd = block_diag_solve(&block_diag_factor(&BlockDiagMatrix::new(blocks).unwrap()).unwrap(), &d).unwrap();
        let band = SymBandedMatrix::from_dense(&DenseMatrix::from_diagonal(&diag), 0).unwrap();
        let bs = banded_solve(&banded_cholesky_factor(&band).unwrap(), &d).unwrap();
        prop_assert!(rel_err(&bd, &bs) < 1e-15);
    }

    #[test]
    fn g_transpose_is_adjoint(seed in any::<u64>(), nx in 1usize..5, nu in 1usize..4, horizon in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = PredictionSparseMatrix::new(random_matrix(&mut rng, nx, nx, 1.0), random_matrix(&mut rng, nx, nu, 1.0), horizon).unwrap();
        let x = random_vec(&mut rng, g.cols());
        let y = random_vec(&mut rng, g.rows());
        let gx = g_matvec(&g, &x).unwrap();
        let gty = gt_matvec(&g, &y).unwrap();
        let lhs: f64 = gx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&gty).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }
}

#[test]
fn structured_g_matches_independent_dense_construction() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..50 {
        let nx = 1 + trial % 4;
        let nu = 1 + trial % 3;
        if !shape_admits_full_row_rank(nx, nu, 2 + trial % 6) {
            continue;
        }
        let inst = random_problem(&mut rng, nx, nu, 2 + trial % 6, 1.0);
        let data = build_problem(&inst.model, &inst.params).unwrap();
        let oracle = DenseQpInstance::from_problem(&inst.model, &inst.params, &inst.x_t, &inst.x_r, &inst.u_r).unwrap();
        let g = to_na(&data.constraint_dense());
        assert_eq!((g.nrows(), g.ncols()), (oracle.g.nrows(), oracle.g.ncols()));
        assert!((g - &oracle.g).amax() < 1e-15);
        let x = random_vec(&mut rng, data.nz());
        let gx = data.g().g_matvec(&x).unwrap();
        let expected: Vec<f64> = (&oracle.g * nalgebra::DVector::from_column_slice(&x)).iter().copied().collect();
        assert!(rel_err(&gx, &expected) < 1e-14);
    }
}

#[test]
fn first_block_row_of_g_returns_x0() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = PredictionSparseMatrix::new(random_matrix(&mut rng, 3, 3, 1.0), random_matrix(&mut rng, 3, 2, 1.0), 4).unwrap();
    let z = random_vec(&mut rng, g.cols());
    assert_eq!(&g.g_matvec(&z).unwrap()[..3], &z[..3]);
}
