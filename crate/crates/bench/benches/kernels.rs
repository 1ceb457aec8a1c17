use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use jch_bench::lattice;
use jch_core::metrics::sym_eig;
use jch_core::thermal::{factorize, gibbs_state};
use jch_core::{fidelity, trace_distance, DMatrix};

fn gibbs(c: &mut Criterion) {
    let p = lattice();
    c.bench_function("gibbs_state N=5", |b| b.iter(|| gibbs_state(black_box(&p)).unwrap()));
    let big = p.with_sites(20);
    c.bench_function("gibbs_state N=20", |b| b.iter(|| gibbs_state(black_box(&big)).unwrap()));
}

fn distances(c: &mut Criterion) {
    let p = lattice();
    let rho = gibbs_state(&p).unwrap();
    let prod = factorize(&rho).unwrap();
    let shifted = gibbs_state(&p.with_g(p.g + 0.01)).unwrap();
    c.bench_function("factorize N=5", |b| b.iter(|| factorize(black_box(&rho)).unwrap()));
    c.bench_function("trace_distance N=5", |b| {
        b.iter(|| trace_distance(black_box(&rho), &prod).unwrap())
    });
    c.bench_function("fidelity N=5", |b| {
        b.iter(|| fidelity(black_box(&rho), &shifted).unwrap())
    });
}

fn jacobi(c: &mut Criterion) {
    let n = 32;
    let m = DMatrix::from_fn(n, n, |i, j| {
        1.0 / (1.0 + i as f64 + j as f64) + if i == j { i as f64 } else { 0.0 }
    });
    c.bench_function("sym_eig 32x32", |b| {
        b.iter_batched(|| m.clone(), |m| sym_eig(&m).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, gibbs, distances, jacobi);
criterion_main!(benches);
