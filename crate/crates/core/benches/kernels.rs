//! Sequential vs. parallel execution of the batch kernels.
//!
//! Run with `cargo bench -p evcharge-core`; build with
//! `--no-default-features` to see the fallback with rayon compiled out.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use evcharge::dual::objective_gradient;
use evcharge::fluid::{integrate_with, IntegrationOptions};
use evcharge::model::{Matrix, Multipliers, ProblemInstance, QueueState};
use evcharge::sim::{simulate_replications, SimConfig};
use evcharge::social::poa_sweep;
use evcharge::spatial::{five_station_layout, raster, SpatialInstance};
use evcharge::{solve_equilibrium, DemandModel, Exec, SolverConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn layout() -> SpatialInstance {
    five_station_layout(0.5).unwrap()
}

fn dual_gradient(c: &mut Criterion) {
    let sp = layout();
    let mu = Multipliers(vec![13.0, 14.0, 8.0, 9.0, 0.0]);
    let mut group = c.benchmark_group("dual_gradient_10k_sites");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| objective_gradient(black_box(&mu), &sp.instance, exec).unwrap())
        });
    }
    group.finish();
}

fn equilibrium(c: &mut Criterion) {
    let sp = layout();
    let mut group = c.benchmark_group("solve_equilibrium_10k_sites");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SolverConfig {
            exec,
            ..SolverConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| solve_equilibrium(&sp.instance, cfg).unwrap())
        });
    }
    group.finish();
}

fn fluid(c: &mut Criterion) {
    let sp = layout();
    let q0 = QueueState(vec![0.0; 5]);
    let mut group = c.benchmark_group("fluid_one_sojourn");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = IntegrationOptions { stride: 100, exec };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, &opts| {
            b.iter(|| integrate_with(&q0, 90.0, 0.15, &sp.instance, opts).unwrap())
        });
    }
    group.finish();
}

fn rasters(c: &mut Criterion) {
    let sp = layout();
    let mu = [13.0, 14.0, 8.0, 9.0, 0.0];
    let mut group = c.benchmark_group("attraction_raster_10k_cells");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| raster(&sp, black_box(&mu), exec))
        });
    }
    group.finish();
}

fn replications(c: &mut Criterion) {
    let sp = layout();
    let cfg = SimConfig {
        seed: 0,
        horizon: 20.0 * 90.0,
        warmup: 90.0,
        rate: 3.0,
        sample_stride: 90.0,
    };
    let seeds: Vec<u64> = (0..8).collect();
    let mut group = c.benchmark_group("stochastic_8_replications");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| simulate_replications(&sp.instance, &cfg, &seeds, exec).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let inst = ProblemInstance::new(
        vec![20.0, 40.0],
        Matrix::from_rows(&[vec![1.0, 10.0]]).unwrap(),
        60.0,
        1e-3,
        DemandModel::Inelastic { rates: vec![1.0] },
    )
    .unwrap();
    let rs: Vec<f64> = (1..=30).map(|k| 0.05 * k as f64).collect();
    let mut group = c.benchmark_group("poa_sweep_30_rates");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| poa_sweep(&inst, &rs, &SolverConfig::default(), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, dual_gradient, equilibrium, fluid, rasters, replications, sweep);
criterion_main!(benches);
