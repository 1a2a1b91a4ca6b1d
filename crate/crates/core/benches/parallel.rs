//! Rayon pool against a single-thread pool on the data-parallel kernels.
//! Without the `parallel` feature only the sequential path is measured.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stppfit_core::diag::{k_inhom, lag_grid, PointIntensity};
use stppfit_core::fit::{godambe, DummyIntensity};
use stppfit_core::forest::{fit_forest, ForestConfig, TrainingTable};
use stppfit_core::sim::{make_synthetic_world, simulate_model, SyntheticWorld, WorldConfig};

fn world() -> SyntheticWorld {
    make_synthetic_world(&WorldConfig::default(), 11).expect("world")
}

fn table() -> TrainingTable {
    let n = 400;
    let x: Vec<Vec<f64>> = (0..4)
        .map(|j| (0..n).map(|i| ((i * (7 + 3 * j) + j) % 97) as f64).collect())
        .collect();
    let y = (0..n).map(|i| x[0][i] + 0.5 * x[1][i]).collect();
    TrainingTable::new((0..4).map(|j| format!("x{j}")).collect(), x, y).expect("table")
}

fn run_in<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        return rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("pool")
            .install(f);
    }
    let _ = threads;
    f()
}

fn modes() -> Vec<(&'static str, Option<usize>)> {
    if cfg!(feature = "parallel") {
        vec![("rayon", None), ("one-thread", Some(1))]
    } else {
        vec![("sequential", None)]
    }
}

fn benches(c: &mut Criterion) {
    let w = world();
    let ts = &w.model.spec.types()[0];
    let theta = &w.model.thetas[0].coefficients;
    let pattern = w.events.clone();
    let lambda = w.model.full(&pattern).expect("intensities");
    let (r, v) = (lag_grid(5000.0, 20), lag_grid(50.0, 20));
    let tab = table();
    let mut fc = ForestConfig::for_vars(4);
    fc.n_trees = 100;

    let mut g = c.benchmark_group("kernels");
    g.sample_size(10);
    for (name, threads) in modes() {
        g.bench_with_input(BenchmarkId::new("simulate", name), &threads, |b, &t| {
            b.iter(|| run_in(t, || black_box(simulate_model(&w.model, 5).expect("sim").len())))
        });
        g.bench_with_input(BenchmarkId::new("godambe", name), &threads, |b, &t| {
            b.iter(|| run_in(t, || black_box(godambe(theta, ts, &DummyIntensity::tuned(1), &w.covariates, 1).expect("g"))))
        });
        g.bench_with_input(BenchmarkId::new("forest", name), &threads, |b, &t| {
            b.iter(|| run_in(t, || black_box(fit_forest(&tab, fc, 3).expect("forest").trees.len())))
        });
        g.bench_with_input(BenchmarkId::new("k_inhom", name), &threads, |b, &t| {
            b.iter(|| run_in(t, || black_box(k_inhom(&pattern, &lambda, &r, &v).expect("k"))))
        });
    }
    g.finish();
}

criterion_group!(parallel, benches);
criterion_main!(parallel);
