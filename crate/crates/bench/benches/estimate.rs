use criterion::{criterion_group, criterion_main, Criterion};
use ounoise::estimate::{fit, loglik, Method};
use ounoise_bench::{noisy_path, params};
use std::hint::black_box;

fn likelihood(c: &mut Criterion) {
    let ts = noisy_path(23_400);
    let p = params();
    c.bench_function("loglik robust 23400", |b| b.iter(|| loglik(black_box(&ts), &p, true)));
    c.bench_function("loglik naive 23400", |b| b.iter(|| loglik(black_box(&ts), &p, false)));
}

fn fits(c: &mut Criterion) {
    let ts = noisy_path(2_340);
    let minute = ts.one_minute().expect("grid");
    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    g.bench_function("mle-nr 2340", |b| b.iter(|| fit(black_box(&ts), Method::MleNr)));
    g.bench_function("arma-nr 1min", |b| b.iter(|| fit(black_box(&minute), Method::ArmaNrCss)));
    g.bench_function("mom-nr 1min", |b| b.iter(|| fit(black_box(&minute), Method::MomNr)));
    g.finish();
}

criterion_group!(benches, likelihood, fits);
criterion_main!(benches);
