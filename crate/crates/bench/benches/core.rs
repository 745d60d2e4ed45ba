use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use labelgan_bench::{blobs, matrix, scores};
use labelgan_core::eval::{friedman_test, nemenyi_posthoc, studentized_range_cdf};
use labelgan_core::nn::{chain_specs, init_network, Activation};
use labelgan_core::wgan::{generate_clean, train, Scheme, WganConfig};

fn mlp(c: &mut Criterion) {
    let net = init_network(&chain_specs(&[784, 185, 200, 185, 2], Activation::Relu, Activation::Softmax), 1).unwrap();
    let x = matrix(64, 784, 7);
    let seed = matrix(64, 2, 8);
    c.bench_function("model_m_forward_batch64", |b| {
        b.iter(|| black_box(net.forward(x.view()).unwrap()))
    });
    c.bench_function("model_m_forward_backward_batch64", |b| {
        b.iter(|| {
            let acts = net.forward(x.view()).unwrap();
            black_box(net.backward_from_logits(&acts, &seed).unwrap())
        })
    });
    c.bench_function("clip_weights", |b| {
        b.iter_batched(
            || net.clone(),
            |mut n| {
                n.clip_weights(0.01).unwrap();
                n
            },
            BatchSize::LargeInput,
        )
    });
}

fn wgan(c: &mut Criterion) {
    let clean = blobs(12, 784, 1);
    let noisy = blobs(2000, 784, 2);
    let mut cfg = WganConfig::new(Scheme::WganXtraY, 3);
    cfg.n_it = 1;
    let mut group = c.benchmark_group("wgan");
    group.sample_size(20);
    group.bench_function("one_outer_iteration_784d", |b| {
        b.iter(|| black_box(train(&cfg, &clean, &noisy).unwrap()))
    });
    let mut entr = cfg.clone();
    entr.scheme = Scheme::WganXtraYEntr;
    group.bench_function("one_outer_iteration_784d_entropy", |b| {
        b.iter(|| black_box(train(&entr, &clean, &noisy).unwrap()))
    });
    let (pair, _) = train(&cfg, &clean, &noisy).unwrap();
    group.bench_function("generate_clean_2000x784", |b| {
        b.iter(|| black_box(generate_clean(&pair, &noisy, cfg.label_block()).unwrap()))
    });
    group.finish();
}

fn stats(c: &mut Criterion) {
    let s = scores(23, 6, 4);
    c.bench_function("friedman_23x6", |b| b.iter(|| black_box(friedman_test(&s).unwrap())));
    let ranks = friedman_test(&s).unwrap().mean_ranks;
    c.bench_function("nemenyi_k6", |b| b.iter(|| black_box(nemenyi_posthoc(&ranks, 23).unwrap())));
    c.bench_function("studentized_range_cdf", |b| {
        b.iter(|| black_box(studentized_range_cdf(black_box(3.1), 6)))
    });
}

criterion_group!(benches, mlp, wgan, stats);
criterion_main!(benches);
