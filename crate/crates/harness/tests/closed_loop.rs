use mpct_core::oracle::optimal_steady_state;
use mpct_core::{build_problem_with_scaling, SolveStatus};
use mpct_harness::{models, simulate_closed_loop, ReferenceSpec};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn reference(x_r: &[f64], u_r: &[f64]) -> ReferenceSpec {
    ReferenceSpec { label: "r".into(), x_r: x_r.to_vec(), u_r: u_r.to_vec() }
}

#[test]
fn integrator_reaches_interior_reference_and_the_oracle_steady_state() {
    let def = models::integrator();
    let data = build_problem_with_scaling(&def.model, &def.params, def.scaling.as_ref()).unwrap();
    let r = reference(&[0.6], &[0.0]);
    let traj = simulate_closed_loop(&data, &[-0.9], &r, 40, 1.0).unwrap();
    assert!(traj.failure.is_none());
    let (xs, _) = optimal_steady_state(&def.model, &def.params, &r.x_r, &r.u_r).unwrap();
    assert!(dist(&traj.final_state, &r.x_r) < 1e-3, "{:?}", traj.final_state);
    assert!(dist(&traj.final_state, &xs) < 1e-3);
}

#[test]
fn integrator_with_reference_outside_the_box_stops_at_the_tightened_bound() {
    let def = models::integrator();
    let data = build_problem_with_scaling(&def.model, &def.params, def.scaling.as_ref()).unwrap();
    let r = reference(&[3.0], &[0.0]);
    let traj = simulate_closed_loop(&data, &[0.0], &r, 40, 1.0).unwrap();
    let (xs, _) = optimal_steady_state(&def.model, &def.params, &r.x_r, &r.u_r).unwrap();
    assert!((xs[0] - (1.0 - def.params.epsilon)).abs() < 1e-9);
    assert!(dist(&traj.final_state, &xs) < 1e-3, "{:?}", traj.final_state);
}

#[test]
fn inputs_stay_in_bounds_even_when_iterations_are_capped() {
    let loaded = models::ball_plate_like_scenario();
    let mut data = loaded.build(Some(0.6)).unwrap();
    data.set_exit_criteria(1e-4, 1e-4, 3).unwrap();
    let r = &loaded.scenario.references[1];
    let traj = simulate_closed_loop(&data, &loaded.scenario.initial_state(0), r, 30, 0.2).unwrap();
    assert!(traj.steps.iter().any(|s| s.status == SolveStatus::MaxIterations));
    let m = &loaded.problem.model;
    for s in &traj.steps {
        for (i, u) in s.u.iter().enumerate() {
            assert!(m.u_lo[i] <= *u && *u <= m.u_hi[i], "u = {u} at step {}", s.step);
        }
    }
}

#[test]
fn bundled_models_settle_on_reachable_references_within_100_steps() {
    let cases: Vec<(mpct_core::problem_file::ProblemDefinition, Vec<f64>, Vec<f64>, Vec<f64>)> = vec![
        (models::integrator(), vec![0.8], vec![0.0], vec![-0.5]),
        (models::mass_spring(), vec![0.5, 0.0], vec![0.5], vec![-0.5, 0.3]),
        (models::ball_plate_like(), models::BALL_PLATE_REACHABLE.to_vec(), vec![0.0, 0.0], vec![
            1.8, 0.2, 0.0, 0.0, 0.3, -0.2, 0.0, 0.0,
        ]),
    ];
    for (def, x_r, u_r, x0) in cases {
        let data = build_problem_with_scaling(&def.model, &def.params, def.scaling.as_ref()).unwrap();
        let traj = simulate_closed_loop(&data, &x0, &reference(&x_r, &u_r), 100, 1.0).unwrap();
        assert!(traj.failure.is_none());
        // an early transient solve may hit max_iter; the settled tail must not
        assert!(traj.steps[50..].iter().all(|s| s.status == SolveStatus::Converged));
        let err = traj.final_state.iter().zip(&x_r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-2, "final error {err} for nx = {}", def.model.nx());
    }
}

#[test]
fn ball_plate_unreachable_reference_settles_at_the_closest_admissible_steady_state() {
    let loaded = models::ball_plate_like_scenario();
    let data = loaded.build(Some(2.0)).unwrap();
    let r = loaded.scenario.reference("unreachable").unwrap();
    let traj = simulate_closed_loop(&data, &loaded.scenario.initial_state(5), r, 150, 0.2).unwrap();
    let (xs, _) = optimal_steady_state(&loaded.problem.model, &loaded.problem.params, &r.x_r, &r.u_r).unwrap();
    assert!(dist(&traj.final_state, &xs) < 1e-3, "{:?} vs {:?}", traj.final_state, xs);
    assert!(dist(&traj.final_state, &r.x_r) > 0.1);
}
