//! Hot kernels under the thread pool and pinned to one thread.
//!
//! `cargo bench -p covcast-core` measures both modes in the parallel build;
//! `cargo bench -p covcast-core --no-default-features` gives the sequential
//! build, where the two modes coincide.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use covcast_core::data::{
    augment_dataset, evaluation_windows, pcc_sweep, sample_training_batch, scale_batch, ForecastDataset, Split,
};
use covcast_core::model::ModelConfig;
use covcast_core::par;
use covcast_core::rng;
use covcast_core::tensor::Tensor;

fn modes() -> Vec<(&'static str, usize)> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![("one-thread", 1), ("pool", all)]
}

fn sine_series(n: usize, len: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|s| {
            (0..len)
                .map(|t| 2.0 + ((t + s) as f64 * std::f64::consts::PI / 6.0).sin())
                .collect()
        })
        .collect()
}

fn gemm(c: &mut Criterion) {
    let mut r = rng::seeded(0);
    let mut rand = |m: usize, n: usize| {
        Tensor::new(
            vec![m, n],
            (0..m * n).map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0)).collect(),
        )
        .unwrap()
    };
    let (a, b) = (rand(512, 160), rand(160, 160));
    let mut group = c.benchmark_group("gemm_512x160x160");
    for (name, threads) in modes() {
        group.bench_function(name, |bench| {
            par::with_threads(threads, || bench.iter(|| black_box(a.matmul(&b).unwrap())))
        });
    }
    group.finish();
}

fn free_run(c: &mut Criterion) {
    let ds = ForecastDataset::new(
        (0..256).map(|i| i.to_string()).collect(),
        augment_dataset(&sine_series(256, 96), 1, 0.2, 1, &[]).unwrap(),
        36,
        12,
    )
    .unwrap();
    let raw = evaluation_windows(&ds, Split::Test).unwrap();
    let scaled = scale_batch(&raw).unwrap();
    let mut group = c.benchmark_group("free_run_256_windows");
    group.sample_size(20);
    for cfg in [ModelConfig::base(1), ModelConfig::seg(1, 12)] {
        let params = cfg.init_params(3).unwrap();
        for (name, threads) in modes() {
            group.bench_function(BenchmarkId::new(cfg.kind.as_str(), name), |bench| {
                par::with_threads(threads, || {
                    bench.iter(|| black_box(cfg.free_run(&params, &scaled, 12).unwrap()))
                })
            });
        }
    }
    group.finish();
}

fn train_step(c: &mut Criterion) {
    let ds = ForecastDataset::new(
        (0..64).map(|i| i.to_string()).collect(),
        augment_dataset(&sine_series(64, 144), 1, 0.2, 1, &[]).unwrap(),
        36,
        12,
    )
    .unwrap();
    let batch = scale_batch(&sample_training_batch(&ds, 64, &mut rng::seeded(2)).unwrap()).unwrap();
    let cfg = ModelConfig::seg(1, 12);
    let params = cfg.init_params(3).unwrap();
    let mut group = c.benchmark_group("train_step_b64");
    group.sample_size(20);
    for (name, threads) in modes() {
        group.bench_function(name, |bench| {
            par::with_threads(threads, || {
                bench.iter(|| black_box(cfg.loss_and_grad(&params, &batch, true, &mut rng::seeded(4)).unwrap()))
            })
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let series = sine_series(128, 500);
    let mut group = c.benchmark_group("pcc_sweep_128x500_k3");
    group.sample_size(10);
    for (name, threads) in modes() {
        group.bench_function(name, |bench| {
            par::with_threads(threads, || bench.iter(|| black_box(pcc_sweep(&series, 3, 1).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, gemm, train_step, free_run, sweep);
criterion_main!(benches);
