use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use dimerwork::numerics::{eig_hermitian, propagator_step};
use dimerwork::{run_single, run_sweep, Axis, DimerConfig, Flags, Protocol, SweepSpec};

fn kernels(c: &mut Criterion) {
    let h = DimerConfig::with_u_tau(4.0, 2.0).exact_h_at(1.0).unwrap();
    c.bench_function("eig_hermitian", |b| {
        b.iter(|| eig_hermitian(black_box(&h), 1e-9).unwrap())
    });
    c.bench_function("propagator_step", |b| {
        b.iter(|| propagator_step(black_box(&h), 1e-3).unwrap())
    });
}

fn single_runs(c: &mut Criterion) {
    let cfg = DimerConfig::with_u_tau(4.0, 2.0);
    let mut g = c.benchmark_group("run_single");
    for (name, p, f) in [
        ("exact", Protocol::Exact, Flags::NONE),
        ("ks-par", Protocol::KsPar, Flags::NONE),
        (
            "ks-par+fop",
            Protocol::KsPar,
            Flags {
                fop: true,
                tpf: false,
            },
        ),
        (
            "ks-plda+tpf",
            Protocol::KsPlda,
            Flags {
                fop: false,
                tpf: true,
            },
        ),
    ] {
        g.bench_with_input(BenchmarkId::from_parameter(name), &(p, f), |b, &(p, f)| {
            b.iter(|| run_single(black_box(&cfg), p, f).unwrap())
        });
    }
    g.finish();
}

fn sweeps(c: &mut Criterion) {
    let mut g = c.benchmark_group("sweep_11x11");
    g.sample_size(10);
    for p in [Protocol::Exact, Protocol::KsPar] {
        let spec = SweepSpec {
            u_over_j: Axis::new(0.0, 10.0, 11).unwrap(),
            tau_j: Axis::new(0.0, 5.0, 11).unwrap(),
            protocol: p,
            ..Default::default()
        };
        g.bench_function(p.as_str(), |b| {
            b.iter(|| run_sweep(black_box(&spec)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, kernels, single_runs, sweeps);
criterion_main!(benches);
