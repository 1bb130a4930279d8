use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use turnpref_core::env::{build_environment, exact_expected_value, EnvSpec, Policy};
use turnpref_core::planner::solve_kl_regularized;

fn planner(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_kl_regularized");
    for horizon in [2, 4, 6] {
        let spec = EnvSpec {
            horizon,
            num_prompts: 2,
            obs_per_step: 2,
            ..EnvSpec::preset("random").unwrap()
        };
        let mdp = build_environment(&spec).unwrap();
        let reference = Policy::uniform(mdp.tree());
        group.bench_with_input(BenchmarkId::from_parameter(horizon), &horizon, |b, _| {
            b.iter(|| solve_kl_regularized(black_box(&mdp), &reference, 0.1).unwrap())
        });
    }
    group.finish();

    let spec = EnvSpec {
        horizon: 5,
        num_prompts: 2,
        obs_per_step: 2,
        ..EnvSpec::preset("random").unwrap()
    };
    let mdp = build_environment(&spec).unwrap();
    let reference = Policy::uniform(mdp.tree());
    let plan = solve_kl_regularized(&mdp, &reference, 0.1).unwrap();
    c.bench_function("exact_expected_value/h5", |b| {
        b.iter(|| {
            exact_expected_value(black_box(&mdp), plan.optimal_policy(), &reference, 0.1).unwrap()
        })
    });
}

criterion_group!(benches, planner);
criterion_main!(benches);
