use std::hint::black_box;

use alienzoo_core::bots::{run_cohort, BotKind, BotPolicy};
use alienzoo_core::cfe::{brute_force_cfe, compute_cfe};
use alienzoo_core::data::{generate_grid, smote_balance};
use alienzoo_core::lmm::{fit_lmm_random_intercept, LmmRow};
use alienzoo_core::pipeline::TrainingRecipe;
use alienzoo_core::stats::{mann_whitney_u, welch_t};
use alienzoo_core::tree::fit_tree;
use alienzoo_core::{CfeConfig, Condition, Experiment, GameEngine, PlantVector};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tree(c: &mut Criterion) {
    let data = smote_balance(&generate_grid(Experiment::Exp1, 1).unwrap(), 10, 5, 7).unwrap();
    let mut g = c.benchmark_group("tree");
    g.sample_size(10);
    g.bench_function("smote_exp1", |b| {
        let grid = generate_grid(Experiment::Exp1, 1).unwrap();
        b.iter(|| smote_balance(black_box(&grid), 10, 5, 7).unwrap())
    });
    g.bench_function("fit_depth7_exp1", |b| {
        b.iter(|| fit_tree(black_box(&data), 7, 5).unwrap())
    });
    g.finish();
}

fn counterfactuals(c: &mut Criterion) {
    let model = TrainingRecipe::for_experiment(Experiment::Exp1, 7)
        .train()
        .unwrap();
    let config = CfeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs: Vec<PlantVector> = (0..64)
        .map(|_| PlantVector::new(std::array::from_fn(|_| rng.random_range(0..=6))).unwrap())
        .collect();
    let mut g = c.benchmark_group("cfe");
    g.bench_function("leaf_boxes", |b| {
        b.iter(|| {
            inputs
                .iter()
                .filter_map(|x| compute_cfe(&model, black_box(x), &config))
                .count()
        })
    });
    g.sample_size(10);
    g.bench_function("grid_scan", |b| {
        b.iter(|| {
            inputs
                .iter()
                .filter_map(|x| brute_force_cfe(&model, black_box(x), &config))
                .count()
        })
    });
    g.finish();
}

fn statistics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut sample = |n: usize, shift: f64| -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() + shift).collect()
    };
    let (a20, b20) = (sample(20, 0.3), sample(20, 0.0));
    let (a200, b200) = (sample(200, 0.1), sample(200, 0.0));
    let mut g = c.benchmark_group("stats");
    g.bench_function("mann_whitney_exact_20x20", |b| {
        b.iter(|| mann_whitney_u(black_box(&a20), black_box(&b20)).unwrap())
    });
    g.bench_function("mann_whitney_normal_200x200", |b| {
        b.iter(|| mann_whitney_u(black_box(&a200), black_box(&b200)).unwrap())
    });
    g.bench_function("welch_200x200", |b| {
        b.iter(|| welch_t(black_box(&a200), black_box(&b200)).unwrap())
    });

    let rows: Vec<LmmRow> = (0..40)
        .flat_map(|s| {
            let u: f64 = rng.random::<f64>() - 0.5;
            (1..=12u32)
                .map(|t| LmmRow {
                    subject: format!("s{s}"),
                    group: if s % 2 == 0 { "control" } else { "cfe" }.into(),
                    trial: t,
                    y: f64::from(t) * if s % 2 == 0 { 0.2 } else { 0.9 } + u + rng.random::<f64>(),
                })
                .collect::<Vec<_>>()
        })
        .collect();
    g.sample_size(20);
    g.bench_function("lmm_40x12", |b| {
        b.iter(|| fit_lmm_random_intercept(black_box(&rows)).unwrap())
    });
    g.finish();
}

fn sessions(c: &mut Criterion) {
    let model = std::sync::Arc::new(
        TrainingRecipe::for_experiment(Experiment::Exp1, 7)
            .train()
            .unwrap(),
    );
    let engine = GameEngine::new(model, CfeConfig::default(), Default::default()).unwrap();
    let policy = BotPolicy::new(BotKind::CfeFollower);
    c.bench_function("cohort_20_followers", |b| {
        b.iter_batched(
            || 7u64,
            |seed| run_cohort(&engine, policy, Condition::Cfe, 20, seed).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, tree, counterfactuals, statistics, sessions);
criterion_main!(benches);
