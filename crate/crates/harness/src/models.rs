//! Bundled example problems.
//!
//! `ball-plate-like` is an 8-state, 2-input model shaped like a ball rolling
//! on a tilting plate: per axis the states are (position, velocity, plate
//! angle, angular rate) and the input is the plate's angular acceleration,
//! discretized with an exact zero-order hold at 0.2 s. The matrices are
//! illustrative, not an identified plant, so iteration counts obtained with
//! it are qualitative. Bounds and weights follow the usual benchmark
//! settings for this system (N = 30, ε = 1e-6).

use mpct_core::problem_file::{ProblemDefinition, ProblemFile};

use crate::error::Result;
use crate::scenario::{LoadedScenario, Scenario};

pub const BALL_PLATE_LIKE: &str = include_str!("../data/ball_plate_like.json");
pub const BALL_PLATE_LIKE_SCENARIO: &str = include_str!("../data/ball_plate_like.scenario.json");
pub const INTEGRATOR: &str = include_str!("../data/integrator.json");
pub const MASS_SPRING: &str = include_str!("../data/mass_spring.json");

/// Reachable and unreachable references of the bundled scenario.
pub const BALL_PLATE_REACHABLE: [f64; 8] = [1.0, 0.0, 0.0, 0.0, 0.8, 0.0, 0.0, 0.0];
pub const BALL_PLATE_UNREACHABLE: [f64; 8] = [2.15, 0.0, 0.0, 0.0, 2.2, 0.0, 0.0, 0.0];

pub const BUILTIN_NAMES: [&str; 3] = ["ball-plate-like", "integrator", "mass-spring"];

/// Problem-file text of a bundled model.
pub fn builtin_problem_text(name: &str) -> Option<&'static str> {
    match name {
        "ball-plate-like" => Some(BALL_PLATE_LIKE),
        "integrator" => Some(INTEGRATOR),
        "mass-spring" => Some(MASS_SPRING),
        _ => None,
    }
}

pub fn builtin_problem(name: &str) -> Option<Result<ProblemDefinition>> {
    builtin_problem_text(name).map(|text| Ok(ProblemFile::from_json_str(text)?.to_definition()?))
}

pub fn ball_plate_like() -> ProblemDefinition {
    builtin_problem("ball-plate-like").expect("bundled").expect("bundled model is valid")
}

pub fn integrator() -> ProblemDefinition {
    builtin_problem("integrator").expect("bundled").expect("bundled model is valid")
}

pub fn mass_spring() -> ProblemDefinition {
    builtin_problem("mass-spring").expect("bundled").expect("bundled model is valid")
}

/// The bundled scenario: 500 random initial states (positions uniform in
/// [0.3, 1.8], velocities in [-0.2, 0.2], plate at rest), one reachable and
/// one unreachable reference, ρ sweep {0.1, 0.6, 2}.
pub fn ball_plate_like_scenario() -> LoadedScenario {
    let scenario = Scenario::from_json_str(BALL_PLATE_LIKE_SCENARIO).expect("bundled scenario parses");
    LoadedScenario::new(scenario, ball_plate_like()).expect("bundled scenario is valid")
}
