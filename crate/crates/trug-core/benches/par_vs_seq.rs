//! Throughput comparison between the default multi-threaded batch path
//! and single-threaded execution of the same workloads. Each workload is
//! run inside the ambient rayon pool ("parallel") and inside a one-thread
//! pool ("sequential"); both produce bit-identical results. Building the
//! crate with `--no-default-features` removes rayon entirely, in which
//! case the two groups coincide.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use trug_core::ais::AisConfig;
use trug_core::rbm::RbmModel;
use trug_core::tggm::TggmModel;
use trug_core::truncnorm::TruncationInterval;
use trug_core::trug::TrugParams;

fn interval(lo: f64, up: f64) -> TruncationInterval {
    TruncationInterval::new(lo, up).unwrap()
}

fn bench_both<F: Fn() + Sync>(c: &mut Criterion, name: &str, work: F) {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut group = c.benchmark_group(name);
    group.bench_function("parallel", |b| b.iter(&work));
    group.bench_function("sequential", |b| b.iter(|| single.install(&work)));
    group.finish();
}

fn bench_cd_batch(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model =
        RbmModel::init(100, 50, TrugParams::shared(interval(0.0, 1.0), 50), &mut rng).unwrap();
    let batch: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..100).map(|_| f64::from(rng.random::<bool>())).collect())
        .collect();
    bench_both(c, "cd1_grads_batch200_n100_m50", move || {
        black_box(model.cd_grads(&batch, 1, 7).unwrap());
    });
}

fn bench_ais(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model =
        RbmModel::init(20, 10, TrugParams::shared(interval(-1.0, 1.0), 10), &mut rng).unwrap();
    let config = AisConfig::linear(200, 64, model.b.clone());
    bench_both(c, "ais_k200_m64_n20_m10", move || {
        black_box(trug_core::ais::run_ais(&config, &model, 7).unwrap());
    });
}

fn bench_tggm_mean_field(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = TggmModel::init(
        10,
        50,
        1,
        TrugParams::shared(interval(0.0, f64::INFINITY), 50),
        &mut rng,
    )
    .unwrap();
    let inputs: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..10).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    let targets: Vec<Vec<f64>> = (0..200)
        .map(|_| vec![rng.random::<f64>() - 0.5])
        .collect();
    bench_both(c, "tggm_ml_grads_batch200_m50", move || {
        black_box(model.ml_grads(&inputs, &targets, 10).unwrap());
    });
}

criterion_group!(benches, bench_cd_batch, bench_ais, bench_tggm_mean_field);
criterion_main!(benches);
