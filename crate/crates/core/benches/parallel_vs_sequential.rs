//! Sequential vs rayon execution of the data-parallel loops.
//!
//! `cargo bench` compares both strategies in one binary. Built with
//! `--no-default-features`, `Parallel` falls back to sequential loops.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use entropy_loss::entropy::entropy_knn_with;
use entropy_loss::harness::{generate_points, run_sweep, ExperimentConfig, PointDistribution};
use entropy_loss::loss::entropy_loss_with_gradients;
use entropy_loss::neighbor_search::{brute_force_knn_with, knn_distances_with};
use entropy_loss::{DuplicatePolicy, EntropyLossConfig, Execution};

const STRATEGIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn normal(n: usize, d: usize, seed: u64) -> entropy_loss::SampleMatrix {
    generate_points(PointDistribution::Normal { std: 1.0 }, n, d, seed).unwrap()
}

fn neighbor_search(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn");
    for (n, d) in [(2000, 3), (5000, 8)] {
        let x = normal(n, d, 1);
        for (name, exec) in STRATEGIES {
            group.bench_with_input(BenchmarkId::new(format!("kd_tree/{name}"), format!("{n}x{d}")), &x, |b, x| {
                b.iter(|| knn_distances_with(black_box(x), 4, exec).unwrap())
            });
        }
    }
    let x = normal(1000, 8, 2);
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::new(format!("brute_force/{name}"), "1000x8"), &x, |b, x| {
            b.iter(|| brute_force_knn_with(black_box(x), 4, exec).unwrap())
        });
    }
    group.finish();
}

fn entropy(c: &mut Criterion) {
    let mut group = c.benchmark_group("entropy");
    let x = normal(5000, 4, 3);
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::new("estimate", name), |b| {
            b.iter(|| entropy_knn_with(black_box(&x), 3, &DuplicatePolicy::Reject, exec).unwrap())
        });
    }
    // one training step's worth of layers: 4 hidden layers, batch 64, width 32
    let layers: Vec<_> = (0..4).map(|l| normal(64, 32, 10 + l)).collect();
    let config = EntropyLossConfig::default();
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::new("loss_with_gradients", name), |b| {
            b.iter(|| entropy_loss_with_gradients(black_box(&layers), &config, exec).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    let configs: Vec<ExperimentConfig> = (0..4)
        .map(|seed| {
            let mut cfg = ExperimentConfig::default().with_seed(seed);
            cfg.epochs = 5;
            cfg
        })
        .collect();
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::new("four_seeds_5_epochs", name), |b| {
            b.iter(|| run_sweep(black_box(&configs), exec))
        });
    }
    group.finish();
}

criterion_group!(benches, neighbor_search, entropy, sweep);
criterion_main!(benches);
