//! Rayon pool vs a single worker on the hot paths. Build with
//! `--no-default-features` to measure the sequential fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use safl::fedopt::run_safari;
use safl::harness::{mlp_population, quadratic_population, safari_config, sweep_cells, ExperimentConfig, Scenario};
use safl::learnability::{impossibility_failure_rate, pac_rate_experiment, ImpossibilityInstance, ThresholdInstance};
use safl::par;
use safl::rng::{Purpose, Stream};

const PATH: &str = if cfg!(feature = "parallel") { "rayon" } else { "fallback" };

fn worker_settings() -> Vec<(String, usize)> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut v = vec![("sequential".to_string(), 1)];
    if cfg!(feature = "parallel") {
        v.push((format!("{PATH}-{all}"), 0));
    }
    v
}

fn impossibility(c: &mut Criterion) {
    let inst = ImpossibilityInstance::new(10, 20, 0.5, 2000).unwrap();
    let mut g = c.benchmark_group("impossibility_2000_trials");
    g.sample_size(10);
    for (label, workers) in worker_settings() {
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| par::with_workers(workers, || impossibility_failure_rate(&inst, 1).unwrap()))
        });
    }
    g.finish();
}

fn pac(c: &mut Criterion) {
    let inst = ThresholdInstance::with_counts(0.0, 1.0, 0.2, 0.7, 0.5, 9, 1).unwrap();
    let mut g = c.benchmark_group("pac_grid_200_trials");
    g.sample_size(10);
    for (label, workers) in worker_settings() {
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| par::with_workers(workers, || pac_rate_experiment(&inst, &[100, 1000, 10_000], 200, 2).unwrap()))
        });
    }
    g.finish();
}

fn client_rounds(c: &mut Criterion) {
    let mut g = c.benchmark_group("safari_run");
    g.sample_size(10);
    let quad = ExperimentConfig::defaults(Scenario::SconvexRate);
    let (qpop, qserver) = quadratic_population(&quad).unwrap();
    let (_, qparams) = sweep_cells(&quad).into_iter().next().unwrap();
    let qcfg = safari_config(&quad, &qparams, qparams.local_steps, 0);
    let qproc = quad.participation.process(qpop.len());

    let mlp = ExperimentConfig::defaults(Scenario::NonconvexRate);
    let (mpop, mserver) = mlp_population(&mlp).unwrap();
    let (_, mparams) = sweep_cells(&mlp).into_iter().next().unwrap();
    let mut mcfg = safari_config(&mlp, &mparams, mparams.local_steps, 0);
    if let safl::objectives::ClientObjective::Mlp(m) = &mpop.client(0).objective {
        mcfg.x0 = Some(m.init_point(&mut Stream::new(0, Purpose::Init, 0, 0)));
    }
    let mproc = mlp.participation.process(mpop.len());

    for (label, workers) in worker_settings() {
        g.bench_function(BenchmarkId::new("quadratic", &label), |b| {
            b.iter(|| par::with_workers(workers, || run_safari(&qpop, &qproc, Some(&qserver), &qcfg).unwrap()))
        });
        g.bench_function(BenchmarkId::new("mlp", &label), |b| {
            b.iter(|| par::with_workers(workers, || run_safari(&mpop, &mproc, Some(&mserver), &mcfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, impossibility, pac, client_rounds);
criterion_main!(benches);
