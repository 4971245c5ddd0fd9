//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use eoflow::config::mms_physics;
use eoflow::mesh::{generate, GeometrySpec, TriMesh};
use eoflow::scheme::{ManufacturedSolution, Problem, SchemeOptions, SimState, Stepper};
use eoflow::verify::MmsCase;

pub fn unit_square(divisions: usize) -> TriMesh {
    generate(&GeometrySpec::unit_square(divisions)).expect("unit square mesh")
}

/// Manufactured-solution stepper with its exact initial state.
pub fn mms_stepper(mesh: &TriMesh, tau: f64) -> (Stepper<'_>, SimState) {
    let case: Arc<dyn ManufacturedSolution> = Arc::new(MmsCase::new(mms_physics()));
    let stepper =
        Stepper::new(mesh, mms_physics(), Problem::Manufactured(case), SchemeOptions::default()).expect("stepper");
    let state = stepper.exact_state(0.0, tau).expect("exact state");
    (stepper, state)
}
