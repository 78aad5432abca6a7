use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use wbkmeans::{
    enumerate_optimal_vertices, multi_start, ClusterBounds, Execution, KernelFunction, KernelMatrix, RunConfig,
    SiteSet, TinyInstance, WeightedDataset,
};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn dataset(seed: u64, n: usize, d: usize) -> WeightedDataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.gen_range(-5.0..5.0)).collect()).collect();
    let w: Vec<f64> = (0..n).map(|_| r.gen_range(0.5..2.0)).collect();
    WeightedDataset::new(&pts, w).unwrap()
}

fn bench_multi_start(c: &mut Criterion) {
    let data = dataset(1, 150, 3);
    let bounds = ClusterBounds::balanced(4, data.total_weight(), 0.1).unwrap();
    let config = RunConfig {
        check_descent: false,
        ..RunConfig::default()
    };
    let seeds: Vec<u64> = (0..8).collect();
    let mut group = c.benchmark_group("multi_start_8_seeds");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| multi_start(black_box(&data), &bounds, &config, &seeds, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_gram(c: &mut Criterion) {
    let data = dataset(2, 600, 4);
    let kernel = KernelFunction::Gaussian { bandwidth: 1.5 };
    let mut group = c.benchmark_group("gram_matrix_600");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| KernelMatrix::new(black_box(&data), kernel, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let data = dataset(3, 4, 2);
    let bounds = ClusterBounds::balanced(3, data.total_weight(), 0.2).unwrap();
    let sites = SiteSet::new(vec![vec![-1.0, 0.0], vec![1.0, 1.0], vec![0.0, -2.0]]).unwrap();
    let tiny = TinyInstance::new(data, &bounds, &sites).unwrap();
    let mut group = c.benchmark_group("oracle_vertices_k3_n4");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| enumerate_optimal_vertices(black_box(&tiny), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_multi_start, bench_gram, bench_oracle);
criterion_main!(benches);
