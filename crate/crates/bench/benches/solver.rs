use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eoflow::assembly::{Convection, FormContext};
use eoflow::config::preset;
use eoflow::sparse::{CsrMatrix, DirectSolver};
use eoflow::verify::setup;
use eoflow_bench::{mms_stepper, unit_square};

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    for n in [16, 32] {
        let mesh = unit_square(n);
        let ctx = FormContext::new(&mesh);
        let wind = vec![0.5; ctx.velocity.n_dofs];
        group.bench_with_input(BenchmarkId::new("mass", n), &n, |b, _| {
            b.iter(|| ctx.mass_matrix(black_box(&ctx.scalar)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("skew_convection", n), &n, |b, _| {
            b.iter(|| ctx.convection_matrix(black_box(&wind), Convection::Skew).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("divergence", n), &n, |b, _| b.iter(|| ctx.divergence_matrix()));
    }
    group.finish();
}

fn direct_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("direct_solve");
    for n in [16, 32] {
        let mesh = unit_square(n);
        let ctx = FormContext::new(&mesh);
        let m = ctx.mass_matrix(&ctx.scalar).unwrap();
        let k = ctx.stiffness_matrix(&ctx.scalar, 1.0).unwrap();
        let a = CsrMatrix::linear_combination(&[(100.0, &m), (1.0, &k)]).unwrap();
        let rhs = vec![1.0; a.n_rows()];
        group.bench_with_input(BenchmarkId::new("transport_refactor", n), &n, |b, _| {
            let mut solver = DirectSolver::new();
            let mut shift = 0.0;
            b.iter(|| {
                // new values every call so the numeric factorization is redone
                shift += 1e-9;
                let a = CsrMatrix::linear_combination(&[(100.0 + shift, &m), (1.0, &k)]).unwrap();
                solver.solve(&a, black_box(&rhs)).unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("transport_cached", n), &n, |b, _| {
            let mut solver = DirectSolver::new();
            b.iter(|| solver.solve(&a, black_box(&rhs)).unwrap())
        });
    }
    group.finish();
}

fn time_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("advance");
    group.sample_size(10);
    for n in [16, 32] {
        let mesh = unit_square(n);
        let (mut stepper, state) = mms_stepper(&mesh, 1e-3);
        group.bench_with_input(BenchmarkId::new("mms", n), &n, |b, _| {
            b.iter(|| stepper.advance(black_box(&state)).unwrap())
        });
    }
    let cfg = preset("tjunction-nu1").unwrap();
    let mesh = cfg.mesh().unwrap();
    let (mut stepper, state) = setup(&cfg, &mesh).unwrap();
    group.bench_function("tjunction", |b| b.iter(|| stepper.advance(black_box(&state)).unwrap()));
    group.finish();
}

criterion_group!(benches, assembly, direct_solve, time_step);
criterion_main!(benches);
