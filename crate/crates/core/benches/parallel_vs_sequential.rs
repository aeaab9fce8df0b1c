//! Default pool against a single worker on the three parallel hot paths.
//! Build with `--no-default-features` to bench the rayon-free code path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use laxhopf::moderation::build_moderation_table;
use laxhopf::verify::{dp_oracle, DpGrids};
use laxhopf::{exec, generalized_lax_hopf, CostField, Lattice, OuterGrid, SolverConfig, TerminalCost};
use std::hint::black_box;

fn lattice(lo: f64, hi: f64, n: usize) -> Lattice {
    Lattice::box_linspace(&[lo], &[hi], &[n]).unwrap()
}

fn modes() -> [(&'static str, Option<usize>); 2] {
    [("pool", None), ("single", Some(1))]
}

fn run<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) => exec::with_threads(n, f),
        None => f(),
    }
}

fn dp(c: &mut Criterion) {
    let terminal = TerminalCost::squared_norm(1.0);
    let cost = CostField::weighted_quadratic(1, 1.0, 1.0);
    let grids = DpGrids::new(1.0, 0.02, lattice(-0.5, 1.5, 1001), lattice(-2.0, 2.0, 41)).unwrap();
    let mut g = c.benchmark_group("dp_oracle");
    g.sample_size(10);
    for (name, threads) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run(threads, || dp_oracle(&terminal, &cost, black_box(&grids)).unwrap()))
        });
    }
    g.finish();
}

fn outer(c: &mut Criterion) {
    let terminal = TerminalCost::squared_norm(1.0);
    let cost = CostField::weighted_quadratic(1, 1.0, 1.0);
    let grid = OuterGrid::uniform(1.0, 6, lattice(-2.0, 2.0, 9)).without_refinement();
    let cfg = SolverConfig {
        n_steps: 30,
        ..SolverConfig::default()
    };
    let mut g = c.benchmark_group("generalized_outer_search");
    g.sample_size(10);
    for (name, threads) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run(threads, || generalized_lax_hopf(&terminal, &cost, 1.0, black_box(&[0.8]), &grid, &cfg).unwrap()))
        });
    }
    g.finish();
}

fn table(c: &mut Criterion) {
    let cost = CostField::weighted_quadratic(1, 1.0, 1.0);
    let omegas = [0.25, 0.5, 0.75, 1.0];
    let upsilon = lattice(-1.0, 1.0, 9);
    let cfg = SolverConfig {
        n_steps: 30,
        ..SolverConfig::default()
    };
    let mut g = c.benchmark_group("moderation_table");
    g.sample_size(10);
    for (name, threads) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run(threads, || build_moderation_table(&cost, 1.0, black_box(&[0.0]), &omegas, &upsilon, &cfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, dp, outer, table);
criterion_main!(benches);
