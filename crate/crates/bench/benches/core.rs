//! Hot-path benchmarks: special functions, KL and its gradient, Dirichlet
//! sampling, the full loss gradient, and one training epoch.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use viedl_core::data::gaussian_blobs;
use viedl_core::dirichlet::{DirichletParams, PriorParams};
use viedl_core::loss::{vi_loss_grad, LabelVector, LossConfig};
use viedl_core::nn::Activation;
use viedl_core::rng::SplitMix64;
use viedl_core::special::{digamma, lgamma, trigamma};
use viedl_core::train::{train_epoch, MlpSpec, Objective, OptimizerKind, TrainConfig, TrainState};

fn bench_special(c: &mut Criterion) {
    let mut group = c.benchmark_group("special");
    group.bench_function("lgamma", |b| {
        b.iter(|| lgamma(black_box(17.25)).unwrap());
    });
    group.bench_function("digamma", |b| {
        b.iter(|| digamma(black_box(3.5)).unwrap());
    });
    group.bench_function("trigamma", |b| {
        b.iter(|| trigamma(black_box(3.5)).unwrap());
    });
    group.finish();
}

fn bench_dirichlet(c: &mut Criterion) {
    let mut group = c.benchmark_group("dirichlet");
    let alpha = DirichletParams::new(vec![4.5, 1.2, 9.0, 2.2, 1.0, 3.3, 7.7, 1.1, 2.0, 5.5]).unwrap();
    let prior = PriorParams::uniform(10);
    group.bench_function("kl_divergence_k10", |b| {
        b.iter(|| alpha.kl_divergence(black_box(&prior)).unwrap());
    });
    group.bench_function("effective_kl_grad_k10", |b| {
        b.iter(|| alpha.effective_kl_grad(black_box(&prior)).unwrap());
    });
    group.bench_function("sample_k10", |b| {
        let mut rng = SplitMix64::new(1);
        b.iter(|| alpha.sample_with(&mut rng));
    });
    group.finish();
}

fn bench_loss(c: &mut Criterion) {
    let mut group = c.benchmark_group("loss");
    let alpha = DirichletParams::new((1..=10).map(|i| i as f64).collect()).unwrap();
    let cfg = LossConfig::new(0.5, PriorParams::uniform(10), 20).unwrap();
    let y = LabelVector::one_hot(3, 10).unwrap();
    group.bench_function("vi_loss_grad_k10", |b| {
        b.iter(|| vi_loss_grad(black_box(&alpha), &y, &cfg, 1.0).unwrap());
    });
    group.finish();
}

fn bench_training(c: &mut Criterion) {
    let mut group = c.benchmark_group("train");
    group.sample_size(20);
    let data = gaussian_blobs(3, 100, 2, 6.0, 1.0, 7).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 32,
        learning_rate: 1e-3,
        loss: LossConfig::new(0.1, PriorParams::uniform(3), 20).unwrap(),
        seed: 7,
        optimizer: OptimizerKind::Adam,
        objective: Objective::Variational,
        arch: MlpSpec { hidden_dims: vec![32], feature_dim: 8, activation: Activation::Relu },
    };
    group.bench_function("epoch_300_samples", |b| {
        b.iter_batched(
            || TrainState::init(2, 3, &cfg).unwrap(),
            |mut state| train_epoch(&mut state, &data, &cfg).unwrap(),
            criterion::BatchSize::SmallInput,
        );
    });
    group.finish();
}

criterion_group!(benches, bench_special, bench_dirichlet, bench_loss, bench_training);
criterion_main!(benches);
