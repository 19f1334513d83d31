use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use switchback_bench::line_fixture;
use switchback_core::dynamics::stationary_instance;
use switchback_core::{gate_oracle, ht_truncated, sample_switchback, simulate_panel, ExposureProbabilities};

fn exposure(c: &mut Criterion) {
    let mut group = c.benchmark_group("exposure_probabilities");
    for size in [64usize, 128, 256] {
        let fx = line_fixture(size, size, 128, 166, &mut ChaCha8Rng::seed_from_u64(1));
        group.bench_with_input(BenchmarkId::from_parameter(size), &size, |b, &size| {
            b.iter(|| ExposureProbabilities::compute(fx.instance.graph(), black_box(&fx.spec), size).unwrap())
        });
    }
    group.finish();
}

fn simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_panel");
    for size in [64usize, 128] {
        let fx = line_fixture(size, size, 128, 166, &mut ChaCha8Rng::seed_from_u64(2));
        let blocks = fx.spec.time_blocks(size).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = sample_switchback(&fx.spec.clustering, &blocks, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(size), &size, |b, _| {
            b.iter(|| simulate_panel(&fx.instance, black_box(&w), &mut rng).unwrap())
        });
    }
    group.finish();
}

fn estimate(c: &mut Criterion) {
    let size = 128;
    let fx = line_fixture(size, size, 128, 166, &mut ChaCha8Rng::seed_from_u64(4));
    let blocks = fx.spec.time_blocks(size).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = sample_switchback(&fx.spec.clustering, &blocks, &mut rng);
    let panel = simulate_panel(&fx.instance, &w, &mut rng).unwrap();
    c.bench_function("ht_truncated/128", |b| {
        b.iter(|| ht_truncated(black_box(&panel), fx.instance.graph(), &fx.spec, &fx.probs).unwrap())
    });
}

fn gate(c: &mut Criterion) {
    let mut group = c.benchmark_group("gate_oracle");
    let single = stationary_instance(1, 4096, 30, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    group.bench_function("single/4096", |b| b.iter(|| gate_oracle(black_box(&single))));
    let fx = line_fixture(128, 128, 128, 166, &mut ChaCha8Rng::seed_from_u64(7));
    group.bench_function("line/128", |b| b.iter(|| gate_oracle(black_box(&fx.instance))));
    group.finish();
}

criterion_group!(benches, exposure, simulate, estimate, gate);
criterion_main!(benches);
