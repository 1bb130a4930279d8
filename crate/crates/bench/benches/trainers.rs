use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use turnpref_core::env::{
    build_environment, sample_from_prompt, sample_trajectory, EnvSpec, Policy, TabularMdp,
};
use turnpref_core::preference::{bt_sample, PreferenceRecord, UtilityFunction};
use turnpref_core::trainers::{DpoObjective, KtoObjective, LabeledData, Objective, TrainerConfig};

fn records(mdp: &TabularMdp, n: usize) -> Vec<PreferenceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let u = UtilityFunction::of_environment(mdp);
    let pi = Policy::uniform(mdp.tree());
    (0..n)
        .map(|_| {
            let a = sample_trajectory(mdp, &pi, &mut rng).unwrap();
            let b = sample_from_prompt(mdp, &pi, a.prompt(), &mut rng).unwrap();
            let z = bt_sample(&u, &a, &b, &mut rng).unwrap();
            PreferenceRecord::new(a, b, z).unwrap()
        })
        .collect()
}

fn trainers(c: &mut Criterion) {
    let spec = EnvSpec {
        horizon: 3,
        actions_per_state: 3,
        num_prompts: 4,
        ..EnvSpec::preset("noisy_tool").unwrap()
    };
    let mdp = build_environment(&spec).unwrap();
    let data = records(&mdp, 2000);
    let reference = Policy::uniform(mdp.tree());
    let config = TrainerConfig {
        eta: 0.1,
        ..TrainerConfig::default()
    };

    let mut dpo = DpoObjective::from_records(&data, reference.clone(), &config).unwrap();
    c.bench_function("m_dpo/evaluate_2000_pairs", |b| {
        b.iter(|| dpo.evaluate(black_box(&reference)).unwrap())
    });

    let labeled = LabeledData::from_records(mdp.tree(), &data).unwrap();
    let mut kto = KtoObjective::new(&mdp, labeled, reference.clone(), &config, 1).unwrap();
    c.bench_function("m_kto/evaluate_2000_pairs", |b| {
        b.iter(|| kto.evaluate(black_box(&reference)).unwrap())
    });
}

criterion_group!(benches, trainers);
criterion_main!(benches);
