use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use trajxai_bench::fixture;
use trajxai_core::explainers::{explain_lime, explain_saliency, explain_shap_sampling};
use trajxai_core::Component;

fn explainers(c: &mut Criterion) {
    let f = fixture(20);
    let mut group = c.benchmark_group("explainers");
    group.sample_size(10);
    group.bench_function("saliency", |b| {
        b.iter(|| explain_saliency(&f.model, black_box(&f.instance)).unwrap())
    });
    group.bench_function("lime/1000", |b| {
        b.iter(|| explain_lime(&f.model, black_box(&f.instance), Component::Dlat, 1000, None, 0).unwrap())
    });
    group.bench_function("shap/2x20", |b| {
        b.iter(|| {
            explain_shap_sampling(&f.model, black_box(&f.instance), &f.background, Component::Dlat, 2, 0)
                .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, explainers);
criterion_main!(benches);
