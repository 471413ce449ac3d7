#![cfg(feature = "oracle")]

mod common;

use common::*;
use mpct_core::oracle::random::{random_problem, random_spd, shape_admits_full_row_rank};
use mpct_core::oracle::{dense_kkt_solve, DenseQpInstance};
use mpct_core::{
    banded_cholesky_factor, block_diag_factor, build_problem, solve_kkt_system, solve_semibanded, BlockDiagMatrix,
    DenseLowRank, DenseMatrix, KktScratch, LtiModel, MpctParams, SemiBandedSystem,
};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn banded_plus_rank_three_matches_dense_lu() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let gamma = random_banded_spd(&mut rng, 10, 2);
    let u = random_matrix(&mut rng, 10, 3, 0.5);
    let v = random_matrix(&mut rng, 3, 10, 0.5);
    let d = random_vec(&mut rng, 10);
    let m = gamma.to_dense().add(&u.matmul(&v));
    let sys = SemiBandedSystem::new(banded_cholesky_factor(&gamma).unwrap(), DenseLowRank::new(u, v).unwrap()).unwrap();
    let z = solve_semibanded(&sys, &d, &mut sys.scratch()).unwrap();
    assert!(rel_err(&z, &dense_solve(&m, &d)) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn semibanded_solve_meets_residual_contract(seed in any::<u64>(), n in 2usize..120, bw in 0usize..6, m in 1usize..8) {
        let bw = bw.min(n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = random_banded_spd(&mut rng, n, bw);
        let scale = 1.0 / (n as f64).sqrt();
        let u = random_matrix(&mut rng, n, m, scale);
        let v = random_matrix(&mut rng, m, n, scale);
        let d = random_vec(&mut rng, n);
        let dense = gamma.to_dense().add(&u.matmul(&v));
        let sys = SemiBandedSystem::new(banded_cholesky_factor(&gamma).unwrap(), DenseLowRank::new(u, v).unwrap()).unwrap();
        let z = sys.solve(&d).unwrap();
        let r = dense.matvec(&z);
        prop_assert!(rel_err(&r, &d) <= 1e-8);
    }

    #[test]
    fn woodbury_identity_holds_densely(seed in any::<u64>(), n in 2usize..40, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = to_na(&random_banded_spd(&mut rng, n, 3.min(n - 1)).to_dense());
        let scale = 1.0 / (n as f64).sqrt();
        let u = to_na(&random_matrix(&mut rng, n, m, scale));
        let v = to_na(&random_matrix(&mut rng, m, n, scale));
        let lhs = (&gamma + &u * &v).try_inverse().unwrap();
        let gi = gamma.try_inverse().unwrap();
        let small = (nalgebra::DMatrix::identity(m, m) + &v * &gi * &u).try_inverse().unwrap();
        let rhs = &gi - &gi * &u * small * &v * &gi;
        prop_assert!((&lhs - &rhs).amax() <= 1e-9 * lhs.amax());
    }
}

#[test]
fn block_diagonal_gamma_system_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let blocks: Vec<DenseMatrix> = (0..6).map(|k| random_spd(&mut rng, 1 + k % 3, 0.5)).collect();
        let gamma = BlockDiagMatrix::new(blocks).unwrap();
        let n = gamma.dim();
        let u = random_matrix(&mut rng, n, 4, 0.3);
        let v = random_matrix(&mut rng, 4, n, 0.3);
        let dense = gamma.to_dense().add(&u.matmul(&v));
        let sys = SemiBandedSystem::new(block_diag_factor(&gamma).unwrap(), DenseLowRank::new(u, v).unwrap()).unwrap();
        let d = random_vec(&mut rng, n);
        assert!(rel_err(&sys.solve(&d).unwrap(), &dense_solve(&dense, &d)) < 1e-10);
    }
}

#[test]
fn decoupled_hessian_and_schur_complement_reconstruct() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..40 {
        let (nx, nu, n) = (1 + trial % 4, 1 + trial % 3, 2 + trial % 4);
        let rho = [0.1, 1.0, 7.0][trial % 3];
        if !shape_admits_full_row_rank(nx, nu, n) {
            continue;
        }
        let inst = random_problem(&mut rng, nx, nu, n, rho);
        let data = build_problem(&inst.model, &inst.params).unwrap();
        let oracle = DenseQpInstance::from_problem(&inst.model, &inst.params, &inst.x_t, &inst.x_r, &inst.u_r).unwrap();

        let p_dense = to_na(&data.hessian_dense().add_diagonal(rho));
        let p_oracle = &oracle.h + nalgebra::DMatrix::identity(data.nz(), data.nz()) * rho;
        assert!((&p_dense - &p_oracle).amax() < 1e-12, "P mismatch in trial {trial}");

        let w_oracle = &oracle.g * p_oracle.try_inverse().unwrap() * oracle.g.transpose();
        let w = to_na(&data.schur_dense());
        assert!((&w - &w_oracle).amax() <= 1e-8 * w_oracle.amax(), "W mismatch in trial {trial}");
    }
}

fn integrator() -> (LtiModel, MpctParams) {
    let one = DenseMatrix::identity(1);
    let model = LtiModel::new(one.clone(), one.clone(), vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]).unwrap();
    (model, MpctParams::new(one.clone(), one.clone(), one.clone(), one, 2, 1.0))
}

#[test]
fn integrator_kkt_matches_dense_saddle_point() {
    let (model, params) = integrator();
    let data = build_problem(&model, &params).unwrap();
    let oracle = DenseQpInstance::from_problem(&model, &params, &[0.5], &[1.0], &[0.0]).unwrap();
    let p: Vec<f64> = oracle.q.iter().map(|v| -v).collect();
    let b = [0.5, 0.0, 0.0, 0.0];
    let sol = solve_kkt_system(&data, &p, &b, &mut KktScratch::new(&data)).unwrap();
    let (z, mu) = dense_kkt_solve(&oracle, &p, &b).unwrap();
    assert!(rel_err(&sol.z, &z) < 1e-13);
    assert!(rel_err(&sol.mu, &mu) < 1e-13);

    let zero = solve_kkt_system(&data, &[0.0; 6], &[0.0; 4], &mut KktScratch::new(&data)).unwrap();
    assert!(zero.z.iter().chain(&zero.mu).all(|v| *v == 0.0));
}

#[test]
fn kkt_solution_satisfies_both_optimality_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..60 {
        let (nx, nu, n) = (1 + trial % 4, 1 + trial % 3, 2 + trial % 7);
        if !shape_admits_full_row_rank(nx, nu, n) {
            continue;
        }
        let inst = random_problem(&mut rng, nx, nu, n, [0.05, 0.6, 3.0][trial % 3]);
        let data = build_problem(&inst.model, &inst.params).unwrap();
        let oracle = DenseQpInstance::from_problem(&inst.model, &inst.params, &inst.x_t, &inst.x_r, &inst.u_r).unwrap();
        let p = random_vec(&mut rng, data.nz());
        let b = random_vec(&mut rng, data.mz());
        let sol = solve_kkt_system(&data, &p, &b, &mut KktScratch::new(&data)).unwrap();
        let z = DVector::from_column_slice(&sol.z);
        let mu = DVector::from_column_slice(&sol.mu);
        let bv = DVector::from_column_slice(&b);
        let primal = (&oracle.g * &z - &bv).amax();
        assert!(primal <= 1e-7 * (1.0 + bv.amax()), "trial {trial}: Gz - b = {primal:e}");
        let pz = &oracle.h * &z + &z * inst.params.rho;
        let stat = (pz + oracle.g.transpose() * &mu + DVector::from_column_slice(&p)).amax();
        assert!(stat <= 1e-7 * (1.0 + amax(&p)), "trial {trial}: stationarity {stat:e}");
        let (zd, _) = dense_kkt_solve(&oracle, &p, &b).unwrap();
        assert!(rel_err(&sol.z, &zd) < 1e-7);
    }
}
