use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use jch_bench::{g_grid, lattice, quench, superfluid_point};
use jch_core::dynamics::max_trace_distance_trajectory;
use jch_core::meanfield::self_consistent_psi;
use jch_core::scaling::{scaling_point, DEFAULT_STEP};
use jch_core::thermal::correlation_curve;

fn trajectory(c: &mut Criterion) {
    let (p, grid) = quench();
    let mut group = c.benchmark_group("dynamics");
    group.sample_size(20);
    group.bench_function("max_trace_distance_trajectory", |b| {
        b.iter(|| max_trace_distance_trajectory(black_box(&p), &grid).unwrap())
    });
    group.finish();
}

fn distance_curve(c: &mut Criterion) {
    let p = lattice();
    let grid = g_grid(480);
    let mut group = c.benchmark_group("sweeps");
    group.sample_size(10);
    group.bench_function("correlation_curve 480 points", |b| {
        b.iter(|| correlation_curve(black_box(&p), &grid))
    });
    group.bench_function("scaling_point N=100", |b| {
        b.iter(|| scaling_point(3.0, black_box(0.0), 300.0, 100, DEFAULT_STEP).unwrap())
    });
    group.finish();
}

fn meanfield(c: &mut Criterion) {
    let mfp = superfluid_point();
    let mut group = c.benchmark_group("meanfield");
    group.sample_size(20);
    group.bench_function("self_consistent_psi superfluid", |b| {
        b.iter(|| self_consistent_psi(black_box(&mfp)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, trajectory, distance_curve, meanfield);
criterion_main!(benches);
