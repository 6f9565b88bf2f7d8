use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use moealloc::fit::{huber_objective, FitOptions};
use moealloc::scaling::{LawCoefficients, LossLawCoefficients};
use moealloc::{fit_loss_law, numeric_optimal_ratio, ElasticityParams};
use moealloc_bench::synthetic_records;

fn bench_objective(c: &mut Criterion) {
    let recs = synthetic_records();
    let coef = LawCoefficients::Final(LossLawCoefficients::PUBLISHED);
    c.bench_function("huber_objective_108", |b| {
        b.iter(|| huber_objective(black_box(&coef), &recs, 1e-3).unwrap())
    });
}

fn bench_fit(c: &mut Criterion) {
    let recs = synthetic_records();
    let opts = FitOptions {
        starts: 16,
        ..FitOptions::default()
    };
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("fit_loss_law_16_starts", |b| {
        b.iter(|| fit_loss_law(black_box(&recs), &opts).unwrap())
    });
    group.finish();
}

fn bench_numeric_ratio(c: &mut Criterion) {
    let p = ElasticityParams {
        mu_a: 0.5,
        mu_e: 0.4,
        gamma_a: 0.8,
        gamma_e: 0.6,
        alpha_a: 1.0,
        alpha_e: 1.2,
    };
    c.bench_function("numeric_optimal_ratio", |b| {
        b.iter(|| numeric_optimal_ratio(black_box(&p), 1e5).unwrap())
    });
}

criterion_group!(benches, bench_objective, bench_fit, bench_numeric_ratio);
criterion_main!(benches);
