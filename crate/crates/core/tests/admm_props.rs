#![cfg(feature = "oracle")]

mod common;

use common::*;
use mpct_core::oracle::random::{feasible_instance, RandomInstance};
use mpct_core::oracle::{dense_qp_solve, DenseQpInstance};
use mpct_core::{
    admm_solve, build_problem, build_problem_with_scaling, AdmmState, DenseMatrix, LtiModel, MpctParams,
    PrecomputedData, Scaling, SolveStatus,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tight(inst: &RandomInstance, rho: f64, max_iter: usize) -> PrecomputedData {
    let mut params = inst.params.clone();
    params.rho = rho;
    let mut data = build_problem(&inst.model, &params).unwrap();
    data.set_exit_criteria(1e-6, 1e-6, max_iter).unwrap();
    data
}

fn oracle_z(inst: &RandomInstance) -> Option<Vec<f64>> {
    let dense = DenseQpInstance::from_problem(&inst.model, &inst.params, &inst.x_t, &inst.x_r, &inst.u_r).unwrap();
    dense_qp_solve(&dense).ok().map(|s| s.z)
}

#[test]
fn integrator_interior_reference_matches_oracle() {
    let one = DenseMatrix::identity(1);
    let model = LtiModel::new(one.clone(), one.clone(), vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]).unwrap();
    let params = MpctParams::new(one.clone(), one.clone(), one.clone(), one, 2, 1.0);
    let mut data = build_problem(&model, &params).unwrap();
    data.set_exit_criteria(1e-6, 1e-6, 20_000).unwrap();
    let (report, state) = admm_solve(&data, &[0.5], &[0.8], &[0.0], None).unwrap();
    assert_eq!(report.status, SolveStatus::Converged);
    let dense = DenseQpInstance::from_problem(&model, &params, &[0.5], &[0.8], &[0.0]).unwrap();
    let z = dense_qp_solve(&dense).unwrap().z;
    assert!(rel_err(&state.v, &z) < 1e-5);
}

#[test]
fn converges_for_any_positive_rho_to_the_oracle_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    for trial in 0..24 {
        let (nx, nu, n) = (1 + trial % 3, 1 + trial % 2, 2 + trial % 7);
        let inst = feasible_instance(&mut rng, nx, nu, n, 1.0);
        let Some(z) = oracle_z(&inst) else { continue };
        for rho in [0.05, 0.5, 5.0, 50.0] {
            let mut data = tight(&inst, rho, 20_000);
            let (report, state) = admm_solve(&data, &inst.x_t, &inst.x_r, &inst.u_r, None).unwrap();
            assert_eq!(report.status, SolveStatus::Converged, "trial {trial}, rho {rho}");
            let dist = |v: &[f64]| v.iter().zip(&z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            // the exit test bounds |v+ - v|, not rho |v+ - v|, so the exit point
            // drifts from the optimum as rho grows; the limit does not
            if rho <= 1.0 {
                assert!(dist(&state.v) <= 1e-4, "trial {trial}, rho {rho}: |v - z*| = {:e}", dist(&state.v));
            }
            data.set_exit_criteria(1e-10, 1e-10, 1_000_000).unwrap();
            let (_, limit) = admm_solve(&data, &inst.x_t, &inst.x_r, &inst.u_r, Some(&state)).unwrap();
            assert!(dist(&limit.v) <= 1e-6, "trial {trial}, rho {rho}: limit |v - z*| = {:e}", dist(&limit.v));
        }
        checked += 1;
    }
    assert!(checked >= 20);
}

#[test]
fn warm_start_keeps_the_limit_and_saves_iterations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..10 {
        let inst = feasible_instance(&mut rng, 3, 2, 6, 1.0);
        let data = tight(&inst, 0.8, 20_000);
        let (cold, s1) = admm_solve(&data, &inst.x_t, &inst.x_r, &inst.u_r, None).unwrap();
        let (warm, s2) = admm_solve(&data, &inst.x_t, &inst.x_r, &inst.u_r, Some(&s1)).unwrap();
        assert_eq!(warm.status, SolveStatus::Converged);
        assert!(warm.iterations <= cold.iterations, "trial {trial}");
        assert!(rel_err(&s2.v, &s1.v) < 1e-5, "trial {trial}");
    }
}

#[test]
fn primal_residual_tail_does_not_grow() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..10 {
        let inst = feasible_instance(&mut rng, 2, 2, 5, 1.0);
        let data = tight(&inst, 0.5, 20_000);
        let (report, _) = admm_solve(&data, &inst.x_t, &inst.x_r, &inst.u_r, None).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        let earlier = report.iterations - report.iterations / 10;
        if earlier == report.iterations || earlier == 0 {
            continue;
        }
        let truncated = tight(&inst, 0.5, earlier);
        let (partial, _) = admm_solve(&truncated, &inst.x_t, &inst.x_r, &inst.u_r, None).unwrap();
        assert!(report.primal_residual <= partial.primal_residual, "trial {trial}");
    }
}

#[test]
fn control_action_respects_input_bounds_on_early_exit() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for max_iter in [1, 2, 5, 17] {
        let inst = feasible_instance(&mut rng, 3, 2, 6, 0.1);
        let data = tight(&inst, 0.1, max_iter);
        let (report, state) = admm_solve(&data, &inst.x_t, &inst.x_r, &inst.u_r, None).unwrap();
        for (j, u) in report.control_action.iter().enumerate() {
            assert!(*u >= inst.model.u_lo[j] && *u <= inst.model.u_hi[j]);
        }
        let (lo, hi) = data.bounds();
        assert!(state.v.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v >= l && v <= h));
    }
}

#[test]
fn optimal_point_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let inst = feasible_instance(&mut rng, 2, 1, 4, 1.0);
        let dense = DenseQpInstance::from_problem(&inst.model, &inst.params, &inst.x_t, &inst.x_r, &inst.u_r).unwrap();
        let Ok(sol) = dense_qp_solve(&dense) else { continue };
        let data = tight(&inst, 1.0, 1);
        let start = AdmmState { z: sol.z.clone(), v: sol.z.clone(), lambda: sol.y.clone(), mu: sol.mu.clone(), k: 0 };
        let (_, next) = admm_solve(&data, &inst.x_t, &inst.x_r, &inst.u_r, Some(&start)).unwrap();
        let scale = 1.0 + amax(&sol.z) + amax(&sol.y);
        assert!(rel_err(&next.v, &sol.z) * amax(&sol.z).max(1.0) <= 1e-12 * scale * 10.0);
        assert!(rel_err(&next.lambda, &sol.y) * amax(&sol.y).max(1.0) <= 1e-12 * scale * 10.0);
    }
}

#[test]
fn equilibrium_fixed_point_converges_in_one_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let inst = feasible_instance(&mut rng, 3, 2, 5, 1.0);
    // x_t at the origin, which is an admissible equilibrium with u = 0
    let (x0, u0) = (vec![0.0; 3], vec![0.0; 2]);
    let data = tight(&inst, 1.0, 100);
    let mut warm = AdmmState::cold(&data);
    warm.v.iter_mut().for_each(|v| *v = 0.0);
    let (report, _) = admm_solve(&data, &x0, &x0, &u0, Some(&warm)).unwrap();
    assert_eq!(report.status, SolveStatus::Converged);
    assert_eq!(report.iterations, 1);
    assert!(report.primal_residual < 1e-14 && report.dual_residual < 1e-14);
}

#[test]
fn diagonal_scaling_does_not_change_the_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..5 {
        let inst = feasible_instance(&mut rng, 3, 2, 6, 1.0);
        let mut params = inst.params.clone();
        params.eps_primal = 1e-9;
        params.eps_dual = 1e-9;
        params.max_iter = 100_000;
        let plain = build_problem(&inst.model, &params).unwrap();
        let scaling = Scaling { state: vec![0.5, 2.0, 1.5], input: vec![3.0, 0.7] };
        let scaled = build_problem_with_scaling(&inst.model, &params, Some(&scaling)).unwrap();
        let (a, _) = admm_solve(&plain, &inst.x_t, &inst.x_r, &inst.u_r, None).unwrap();
        let (b, _) = admm_solve(&scaled, &inst.x_t, &inst.x_r, &inst.u_r, None).unwrap();
        assert_eq!(a.status, SolveStatus::Converged);
        assert_eq!(b.status, SolveStatus::Converged);
        assert!(rel_err(&a.control_action, &b.control_action) < 1e-6);
        assert!(rel_err(&a.artificial_state, &b.artificial_state) < 1e-6);
    }
}
