use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use slowfast::averaging::{s_along_orbit, s_of_samples};
use slowfast::connection::{connection_data, horizontal_lifts};
use slowfast::flow::{sample_orbit, sample_states, find_period};
use slowfast::normal_form::{approx_integral_f, drift_run, split};
use slowfast::{DriftConfig, IntegratorConfig, Quadrature};
use slowfast_bench::{periodic_signal, reference_point, system};

fn quadrature(c: &mut Criterion) {
    let mut g = c.benchmark_group("integrating operator");
    for n in [64, 256, 1024] {
        let v = periodic_signal(n);
        g.bench_with_input(BenchmarkId::new("weights, one node", n), &v, |b, v| b.iter(|| s_of_samples(black_box(v))));
        g.bench_with_input(BenchmarkId::new("fft, all nodes", n), &v, |b, v| b.iter(|| s_along_orbit(black_box(v))));
    }
    g.finish();
}

fn orbits(c: &mut Criterion) {
    let m = reference_point();
    let twist = system("twist2");
    let anharmonic = system("anharmonic");
    let mut g = c.benchmark_group("orbit sampling");
    g.bench_function("exact, states", |b| b.iter(|| sample_states(&twist, black_box(&m), 256, &IntegratorConfig::default())));
    g.bench_function("rk4, states", |b| {
        b.iter(|| sample_states(&twist, black_box(&m), 256, &IntegratorConfig::default().numeric()))
    });
    g.bench_function("rk4, tangents", |b| {
        b.iter(|| sample_orbit(&twist, black_box(&m), 256, &IntegratorConfig::default().numeric()))
    });
    g.bench_function("anharmonic, numeric tangents", |b| {
        b.iter(|| sample_orbit(&anharmonic, black_box(&m), 256, &IntegratorConfig::default()))
    });
    g.bench_function("period detection", |b| b.iter(|| find_period(&anharmonic, black_box(&m), &IntegratorConfig::default())));
    g.finish();
}

fn geometry(c: &mut Criterion) {
    let m = reference_point();
    let sys = system("shear");
    let qc = Quadrature::default();
    let mut g = c.benchmark_group("connection and normal form");
    g.sample_size(20);
    g.bench_function("connection data", |b| b.iter(|| connection_data(&sys, black_box(&m), &qc)));
    g.bench_function("horizontal lifts", |b| b.iter(|| horizontal_lifts(&sys, black_box(&m), &qc)));
    g.bench_function("splitting", |b| b.iter(|| split(&sys, black_box(&m), &qc)));
    g.bench_function("improved integral", |b| b.iter(|| approx_integral_f(&sys, 0.05, black_box(&m), &qc)));
    g.finish();
}

fn drift(c: &mut Criterion) {
    let m = reference_point();
    let sys = system("twist2");
    let cfg = DriftConfig {
        samples: 100,
        ..DriftConfig::default()
    };
    let mut g = c.benchmark_group("drift");
    g.sample_size(10);
    g.bench_function("eps 0.1, horizon 1/eps", |b| b.iter(|| drift_run(&sys, 0.1, black_box(&m), 1.0, &cfg)));
    g.finish();
}

criterion_group!(benches, quadrature, orbits, geometry, drift);
criterion_main!(benches);
