use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pmaxevt_core::distances::{exact_vs_limit, hellinger_bound_eq23, thm33_bound};
use pmaxevt_core::models::sample_top_k;
use pmaxevt_core::{
    build_perturbed, integrate, DistanceKind, ExactMaxLaw, McOptions, Normalization, PMaxLaw,
    Perturbation, PerturbedSpec,
};

fn spec(perturbation: Perturbation) -> PerturbedSpec {
    PerturbedSpec {
        family: 3,
        alpha: None,
        l: 0.5,
        delta: 0.5,
        perturbation,
        normalization: Normalization::Truncate,
    }
}

fn laws(c: &mut Criterion) {
    let h = PMaxLaw::new(1, Some(2.0)).unwrap();
    c.bench_function("law_cdf_family1", |b| b.iter(|| h.kth_limit_cdf(3, black_box(1.7))));
    c.bench_function("quadrature_gauss_tail", |b| {
        b.iter(|| integrate(|x: f64| (-x * x).exp(), black_box(0.0), f64::INFINITY, 1e-12))
    });
}

fn distances(c: &mut Criterion) {
    let zero = build_perturbed(&spec(Perturbation::Zero)).unwrap();
    let sine = build_perturbed(&spec(Perturbation::EnvelopeSine)).unwrap();
    let law = zero.law();
    let norming = law.derive_norming(1000);
    c.bench_function("hellinger_zero_n1000", |b| {
        b.iter(|| exact_vs_limit(&zero, norming, black_box(1000), 1, DistanceKind::Hellinger, 1e-10))
    });
    c.bench_function("tv_sine_n1000_k2", |b| {
        b.iter(|| exact_vs_limit(&sine, norming, black_box(1000), 2, DistanceKind::TotalVariation, 1e-10))
    });
    c.bench_function("bound_eq23_sine_n1000", |b| {
        b.iter(|| hellinger_bound_eq23(&sine, norming, black_box(1000), None, 1.0, 1e-10))
    });
    let mc = McOptions { samples: 10_000, seed: 1 };
    c.bench_function("bound_thm33_zero_k4", |b| {
        b.iter(|| thm33_bound(&zero, norming, black_box(1000), 4, None, 1.0, mc, 1e-10))
    });
}

fn sampling(c: &mut Criterion) {
    let zero = build_perturbed(&spec(Perturbation::Zero)).unwrap();
    let exact = ExactMaxLaw::new(zero.clone(), 100, zero.law().derive_norming(100), 3).unwrap();
    c.bench_function("sample_top3_n100_m1000", |b| b.iter(|| sample_top_k(&exact, 1000, black_box(7))));
}

criterion_group!(benches, laws, distances, sampling);
criterion_main!(benches);
