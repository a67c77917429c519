use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use netsir::par::{self, Execution};
use netsir::volterra::{solve_pairwise, ModelParams, SolverConfig};
use netsir::{run_ensemble, EnsembleConfig, EpidemicParams, GraphSource, RecoveryDistribution};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    let dist = RecoveryDistribution::erlang(3, 2.0).unwrap();
    let p = EpidemicParams::new(0.35, dist, 5, 25.0).unwrap();
    let source = GraphSource::Fresh {
        nodes: 1000,
        degree: 15,
    };
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 32), &exec, |b, &exec| {
            let mut cfg = EnsembleConfig::new(32, 1);
            cfg.exec = exec;
            b.iter(|| black_box(run_ensemble(source, &p, &cfg).unwrap()));
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("tau_sweep");
    group.sample_size(10);
    let taus: Vec<f64> = (0..16).map(|k| 0.05 + 0.06 * k as f64).collect();
    let cfg = SolverConfig::default();
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, taus.len()), &exec, |b, &exec| {
            b.iter(|| {
                par::map_slice(&taus, exec, |&tau| {
                    let p = ModelParams::new(tau, "uniform:a=1,b=2".parse().unwrap(), 15.0, 1000.0, 5.0).unwrap();
                    solve_pairwise(&p, &cfg).unwrap().trajectory.peak_prevalence()
                })
            });
        });
    }
    group.finish();
}

fn solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("pairwise_solve");
    group.sample_size(10);
    let cfg = SolverConfig::default();
    for spec in ["exp:rate=0.6666666666666666", "fixed:sigma=1.5", "gamma:shape=3,rate=2", "uniform:a=1,b=2"] {
        let p = ModelParams::new(0.35, spec.parse().unwrap(), 15.0, 1000.0, 5.0).unwrap();
        group.bench_function(p.dist.family(), |b| b.iter(|| black_box(solve_pairwise(&p, &cfg).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, ensemble, sweep, solver);
criterion_main!(benches);
