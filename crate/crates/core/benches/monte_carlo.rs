use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use photomesh::decompose::{square_decompose, triangular_decompose};
use photomesh::experiments::{fidelity_sweep, reflectivity_statistics};
use photomesh::par;
use photomesh::unitary::haar_random_unitary;
use photomesh::LayoutKind;

fn decomposition(c: &mut Criterion) {
    let mut g = c.benchmark_group("decompose");
    for n in [8usize, 20, 50] {
        let u = haar_random_unitary(n, 1).unwrap();
        g.bench_with_input(BenchmarkId::new("square", n), &u, |b, u| {
            b.iter(|| square_decompose(black_box(u)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("triangular", n), &u, |b, u| {
            b.iter(|| triangular_decompose(black_box(u)).unwrap())
        });
    }
    g.finish();
}

/// The same harness on one thread and on the default pool.
fn harnesses(c: &mut Criterion) {
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    let threads = [("sequential", Some(1)), ("parallel", None)];
    for (label, jobs) in threads {
        g.bench_function(BenchmarkId::new("fidelity_sweep_n20", label), |b| {
            b.iter(|| par::with_jobs(jobs, || fidelity_sweep(&[20], &[0.01, 0.05], 200, LayoutKind::Square, 7).unwrap()))
        });
        g.bench_function(BenchmarkId::new("reflectivity_statistics_n20", label), |b| {
            b.iter(|| par::with_jobs(jobs, || reflectivity_statistics(20, 500, 7).unwrap()))
        });
    }
    g.bench_function("map_range_sequential_n20", |b| {
        b.iter(|| {
            par::map_range_sequential(200, |s| square_decompose(&haar_random_unitary(20, s as u64).unwrap()).unwrap())
        })
    });
    g.finish();
}

criterion_group!(benches, decomposition, harnesses);
criterion_main!(benches);
