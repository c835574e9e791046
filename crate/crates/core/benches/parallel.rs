//! Sequential vs rayon execution of the replicate loops.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use wfdual::diffusion::SdeConfig;
use wfdual::harness::{generator_sweep, mc_duality_check, McCheckConfig, SweepConfig};
use wfdual::kfun::{CachedOracle, IRoute, TwoLocusOracle};
use wfdual::model::two_locus_params;
use wfdual::specfun::SeriesControl;
use wfdual::stationary::{density_grid, mcmc_chains, McmcConfig};
use wfdual::{DualState, Execution, FrequencyState};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn duality_check(c: &mut Criterion) {
    let p = two_locus_params([0.8, 0.8], [0.8, 0.8], 2.0, 2.0).unwrap();
    let o = CachedOracle::new(TwoLocusOracle::new(&p, IRoute::Series, SeriesControl::default()).unwrap());
    let x = FrequencyState::uniform(p.layout());
    let n = DualState::new(p.layout(), vec![1, 0, 1, 0]).unwrap();
    let sde = SdeConfig::new(1e-2, 0);
    let cfg = McCheckConfig::new(0.5, 2_000, 1);
    let mut g = c.benchmark_group("mc_duality_check");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(mc_duality_check(&p, &x, &n, &o, &sde, &cfg, exec).unwrap()))
        });
    }
    g.finish();
}

fn generator(c: &mut Criterion) {
    let p = two_locus_params([0.8, 0.8], [0.8, 0.8], 2.0, 2.0).unwrap();
    let o = CachedOracle::new(TwoLocusOracle::new(&p, IRoute::Series, SeriesControl::default()).unwrap());
    let cfg = SweepConfig { trials: 400, max_total: 4, tol: 1e-6, seed: 1, perturb_rate: None };
    let mut g = c.benchmark_group("generator_sweep");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(generator_sweep(&p, &o, &cfg, exec).unwrap()))
        });
    }
    g.finish();
}

fn grid(c: &mut Criterion) {
    let p = two_locus_params([0.8, 0.8], [0.8, 0.8], 2.0, 2.0).unwrap();
    let mut g = c.benchmark_group("density_grid_400");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(density_grid(&p, 400, exec).unwrap()))
        });
    }
    g.finish();
}

fn chains(c: &mut Criterion) {
    let p = two_locus_params([0.8, 0.8], [0.8, 0.8], 2.0, 2.0).unwrap();
    let cfg = McmcConfig::new(5_000, 1_000, 3);
    let mut g = c.benchmark_group("mcmc_8_chains");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(mcmc_chains(&p, &cfg, 8, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, duality_check, generator, grid, chains);
criterion_main!(benches);
