use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use trajxai_bench::fixture;
use trajxai_core::forecaster::{forward_standardized, loss_and_gradients_standardized};

fn forecaster(c: &mut Criterion) {
    let f = fixture(10);
    c.bench_function("forward", |b| {
        b.iter(|| forward_standardized(&f.model.weights, black_box(&f.instance)).unwrap())
    });
    c.bench_function("loss_and_gradients/batch32", |b| {
        b.iter(|| loss_and_gradients_standardized(&f.model.weights, black_box(&f.batch)).unwrap())
    });
}

criterion_group!(benches, forecaster);
criterion_main!(benches);
