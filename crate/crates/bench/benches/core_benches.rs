use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use switchq_core::bounds::{BoundId, BoundParams, ExponentVariant};
use switchq_core::comparison::{CoupledContext, CoupledOptions};
use switchq_core::q_learning::{run_q_learning, SnapshotStride};
use switchq_core::rng::rng_from_seed;
use switchq_core::value_iteration::solve_optimal_q;
use switchq_core::{bellman_operator, generate_random_game, Dims, GameSpec, QTable, SamplingModel};

fn bench_bellman_operator(c: &mut Criterion) {
    let dims = Dims::new(3, 4, 5).unwrap();
    let spec = generate_random_game(dims, 0.9, 1).unwrap();
    let mut rng = rng_from_seed(2);
    let q = QTable::random(dims, 2.0, &mut rng);
    c.bench_function("bellman_operator_3x4x5", |b| {
        b.iter(|| bellman_operator(black_box(&q), black_box(&spec)).unwrap())
    });
}

fn bench_solve(c: &mut Criterion) {
    let dims = Dims::new(2, 2, 3).unwrap();
    let spec = generate_random_game(dims, 0.9, 3).unwrap();
    c.bench_function("solve_optimal_q_2x2x3_gamma09", |b| {
        b.iter(|| solve_optimal_q(black_box(&spec), 1e-10).unwrap())
    });
}

fn bench_q_learning(c: &mut Criterion) {
    let spec = GameSpec::matching_pennies();
    let model = SamplingModel::uniform(spec.dims());
    let q0 = QTable::zeros(spec.dims());
    c.bench_function("q_learning_10k_steps_mp2", |b| {
        b.iter(|| {
            run_q_learning(
                black_box(&spec),
                &model,
                0.05,
                10_000,
                7,
                &q0,
                SnapshotStride::Disabled,
            )
            .unwrap()
        })
    });
}

fn bench_coupled_run(c: &mut Criterion) {
    let dims = Dims::new(2, 2, 3).unwrap();
    let spec = generate_random_game(dims, 0.9, 4).unwrap();
    let model = SamplingModel::random(dims, 5);
    let ctx = CoupledContext::solve(&spec, &model, 0.05, 1e-12).unwrap();
    let q0 = QTable::zeros(dims);
    let opts = CoupledOptions {
        snapshot_stride: SnapshotStride::Disabled,
        ..CoupledOptions::default()
    };
    c.bench_function("coupled_run_1k_steps_2x2x3", |b| {
        b.iter(|| ctx.run(1_000, black_box(11), &q0, &opts).unwrap())
    });
}

fn bench_bound_grid(c: &mut Criterion) {
    let p = BoundParams::new(
        0.05,
        0.5,
        0.25,
        0.25,
        4,
        0.0,
        8.0_f64.sqrt(),
        2.0,
        ExponentVariant::Printed,
    )
    .unwrap();
    c.bench_function("bound_grid_10k_steps_six_bounds", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for k in 0..10_000 {
                for id in [
                    BoundId::Thm1,
                    BoundId::Thm2,
                    BoundId::Cor1Eq4,
                    BoundId::Cor1Eq5,
                    BoundId::Thm4,
                    BoundId::Thm5,
                ] {
                    acc += id.eval(k, &p);
                }
            }
            black_box(acc)
        })
    });
}

criterion_group!(
    benches,
    bench_bellman_operator,
    bench_solve,
    bench_q_learning,
    bench_coupled_run,
    bench_bound_grid
);
criterion_main!(benches);
