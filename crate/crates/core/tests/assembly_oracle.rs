mod common;

use common::*;
use eoflow::assembly::{Convection, FormContext};
use eoflow::fem::{interpolate_scalar, DofMap, SpaceKind};
use eoflow::mesh::{generate, GeometrySpec, TriMesh};
use rand::{Rng, SeedableRng};

const TOL: f64 = 1e-12;

fn meshes() -> Vec<TriMesh> {
    vec![jittered_square(1), jittered_square(2), generate(&GeometrySpec::channel(1.0, 2.0, 0.5)).unwrap()]
}

fn random(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn meshes_are_small() {
    assert!(meshes().iter().all(|m| m.n_triangles() <= 32));
}

#[test]
fn mass_and_stiffness_match_oracle() {
    for m in meshes() {
        let ctx = FormContext::new(&m);
        let p1 = DofMap::new(SpaceKind::P1, &m);
        assert!(rel_diff(&ctx.mass_matrix(&p1).unwrap().to_dense(), &mass(&m, false)) < TOL);
        assert!(rel_diff(&ctx.mass_matrix(&ctx.scalar).unwrap().to_dense(), &mass(&m, true)) < TOL);
        let k = ctx.stiffness_matrix(&ctx.scalar, 0.7).unwrap().to_dense();
        assert!(rel_diff(&k, &stiffness(&m, true, 0.7)) < TOL);
        let k = ctx.stiffness_matrix(&p1, 1.0).unwrap().to_dense();
        assert!(rel_diff(&k, &stiffness(&m, false, 1.0)) < TOL);
    }
}

#[test]
fn convection_matches_oracle() {
    for (s, m) in meshes().into_iter().enumerate() {
        let ctx = FormContext::new(&m);
        let wind = random(ctx.velocity.n_dofs, s as u64);
        for (form, skew) in [(Convection::Plain, false), (Convection::Skew, true)] {
            let c = ctx.convection_matrix(&wind, form).unwrap().to_dense();
            assert!(rel_diff(&c, &convection(&m, &wind, skew)) < TOL, "{form:?}");
        }
    }
}

#[test]
fn drift_matches_oracle() {
    for (s, m) in meshes().into_iter().enumerate() {
        let ctx = FormContext::new(&m);
        let linear = interpolate_scalar(|x| x[0], &ctx.scalar, &m);
        let d = ctx.drift_matrix(&linear, 1.5).unwrap().to_dense();
        assert!(rel_diff(&d, &drift(&m, &linear, 1.5)) < TOL);
        let phi = random(ctx.scalar.n_dofs, 10 + s as u64);
        let d = ctx.drift_matrix(&phi, -0.3).unwrap().to_dense();
        assert!(rel_diff(&d, &drift(&m, &phi, -0.3)) < TOL);
    }
}

#[test]
fn divergence_and_body_force_match_oracle() {
    for (s, m) in meshes().into_iter().enumerate() {
        let ctx = FormContext::new(&m);
        assert!(rel_diff(&ctx.divergence_matrix().to_dense(), &divergence(&m)) < TOL);
        let rho = random(ctx.scalar.n_dofs, 20 + s as u64);
        let phi = random(ctx.scalar.n_dofs, 30 + s as u64);
        let f = ctx.body_force_vector(&rho, &phi).unwrap();
        assert!(rel_diff_vec(&f, &body_force(&m, &rho, &phi)) < TOL);
    }
}
