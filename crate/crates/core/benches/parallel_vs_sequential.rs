//! Same work on a one-thread rayon pool and on the global pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use palms_core::benchmark::{run_trial, ExperimentConfig, MethodId};
use palms_core::selection::grid_fold_correctness;
use palms_core::{ClassLabel, Dataset, ModelGrid, ModelParams, SolverSettings};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn blobs(per_class: usize, dims: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    for (label, shift) in [(ClassLabel::Zero, -0.6), (ClassLabel::One, 0.6)] {
        for _ in 0..per_class {
            rows.push(((0..dims).map(|_| shift + noise.sample(&mut rng)).collect(), label));
        }
    }
    Dataset::from_rows(rows).unwrap()
}

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", one), ("parallel", all)]
}

fn grid_loocv(c: &mut Criterion) {
    let data = blobs(30, 8);
    let g = 1.0 / 8.0;
    let gammas: Vec<f64> = [1e-4, 1e-2, 1.0, 1e2, 1e4].iter().map(|m| m * g).collect();
    let grid = ModelGrid::product(&[0.01, 1.0, 100.0, 1e4], &gammas, ModelParams { c: 1.0, gamma: g }).unwrap();
    let settings = SolverSettings::default();
    let mut group = c.benchmark_group("grid_loocv_60");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| grid_fold_correctness(&data, &grid, &settings).unwrap()))
        });
    }
    group.finish();
}

fn short_trial(c: &mut Criterion) {
    let data = blobs(150, 8);
    let config = ExperimentConfig {
        methods: MethodId::ALL.to_vec(),
        budget: 10,
        stride: 5,
        ..Default::default()
    };
    let mut group = c.benchmark_group("trial_budget_10");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| run_trial(&data, &config, 0).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, grid_loocv, short_trial);
criterion_main!(benches);
