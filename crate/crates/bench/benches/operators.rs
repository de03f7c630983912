use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use graph1l::{energy_j, Denominator};
use graph1l_bench::clustered_graph;
use std::hint::black_box;

fn gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("gradient");
    for n in [1_000, 10_000] {
        let g = clustered_graph(10, n / 10, 8, 0.05, 1);
        let op = g.gradient();
        let u: Vec<f64> = (0..g.n()).map(|x| (x as f64).sin()).collect();
        let z: Vec<f64> = (0..g.m()).map(|e| (e as f64).cos()).collect();
        let mut ku = vec![0.0; g.m()];
        let mut ktz = vec![0.0; g.n()];
        group.bench_with_input(BenchmarkId::new("apply", n), &n, |b, _| {
            b.iter(|| op.apply_into(black_box(&u), &mut ku))
        });
        group.bench_with_input(BenchmarkId::new("adjoint", n), &n, |b, _| {
            b.iter(|| op.adjoint_into(black_box(&z), &mut ktz))
        });
        group.bench_with_input(BenchmarkId::new("energy_j", n), &n, |b, _| {
            b.iter(|| energy_j(&op, black_box(&u)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("l1_median", n), &n, |b, _| {
            b.iter(|| Denominator::L1Median.subgradient(black_box(&u)))
        });
    }
    group.finish();
}

fn operator_norm(c: &mut Criterion) {
    let g = clustered_graph(10, 1_000, 8, 0.05, 2);
    c.bench_function("operator_norm/10000", |b| {
        b.iter(|| g.gradient().operator_norm(black_box(100)))
    });
}

criterion_group!(benches, gradient, operator_norm);
criterion_main!(benches);
