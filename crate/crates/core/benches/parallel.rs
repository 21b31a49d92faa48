//! Parallel against sequential: each workload runs inside a one-thread rayon
//! pool and inside the default pool.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ergopt_core::dynamics::ExpandingMap;
use ergopt_core::kernel::KernelContext;
use ergopt_core::piecewise::{candidate_words, optimal_selection, uniform_grid, CandidateSet, ScheduleKernel, DEFAULT_TIE_TOL};
use ergopt_core::symbolic::{EventuallyPeriodicPoint as Epp, Word};
use ergopt_core::transfer::{EigenOptions, PotentialSpec, Transfer};
use rayon::{ThreadPool, ThreadPoolBuilder};

fn pools() -> Vec<(String, ThreadPool)> {
    let default = ThreadPoolBuilder::new().build().unwrap();
    let n = default.current_num_threads();
    vec![
        ("sequential".to_string(), ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        (format!("parallel-{n}"), default),
    ]
}

fn transfer(src: &str, n: usize) -> Transfer {
    let pot = PotentialSpec::parse_a(src).unwrap();
    Transfer::with_nodes(Arc::new(ExpandingMap::doubling()), Arc::new(pot), n).unwrap()
}

fn eigen(c: &mut Criterion) {
    let t = transfer("cos(2*pi*x)", 128);
    let mut g = c.benchmark_group("leading_eigen");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new(name, "cos beta=8 n=128"), |b| {
            b.iter(|| pool.install(|| black_box(t.leading_eigen(8.0, EigenOptions::default()).unwrap())))
        });
    }
    g.finish();
}

fn rho(c: &mut Criterion) {
    let mut g = c.benchmark_group("word_measure_ratio");
    g.sample_size(10);
    let omega = Epp::parse("0|01", 2).unwrap();
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new(name, "x k=12"), |b| {
            b.iter(|| {
                // a fresh context so the eigen cache is not reused
                let ctx = KernelContext::new(transfer("x", 128), 1.0, Epp::parse("1", 2).unwrap()).unwrap();
                pool.install(|| black_box(ctx.word_measure_ratio(&omega, 4.0, 12).unwrap()))
            })
        });
    }
    g.finish();
}

fn v_dual(c: &mut Criterion) {
    let ctx = KernelContext::new(transfer("x", 64), 1.0, Epp::parse("1", 2).unwrap()).unwrap();
    let schedule = [8.0, 16.0, 32.0, 64.0];
    ctx.prefetch(&schedule).unwrap();
    let one = Word::parse("1", 2).unwrap();
    let words = candidate_words(&one, 3).unwrap();
    let cand = CandidateSet::from_parts(words.into_iter().map(|w| (w, 0.0)).collect(), one, 3).unwrap();
    let xs = uniform_grid(1024);
    let mut g = c.benchmark_group("v_dual_selection");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new(name, "x 1024 points"), |b| {
            b.iter(|| {
                pool.install(|| {
                    let k = ScheduleKernel::new(&ctx, &schedule, 1e-10, 40).unwrap();
                    black_box(optimal_selection(&xs, &cand, &k, 1.0, DEFAULT_TIE_TOL).unwrap())
                })
            })
        });
    }
    g.finish();
}

fn orbits(c: &mut Criterion) {
    let map = ExpandingMap::doubling();
    let a = |x: f64| (2.0 * std::f64::consts::PI * x).cos();
    let mut g = c.benchmark_group("periodic_orbits");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new(name, "period <= 16"), |b| {
            b.iter(|| pool.install(|| black_box(map.enumerate_periodic_orbits(16, &a).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, eigen, rho, v_dual, orbits);
criterion_main!(benches);
