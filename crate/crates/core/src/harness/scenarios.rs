use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, QRule, Scenario};
use super::mnist::load_mnist_idx;
use super::output::{records_to_csv, write_json};
use crate::error::{Error, Result};
use crate::fedopt::{
    admissible_ratio_band, eta_bar, q_bound_nonconvex, q_bound_strongly_convex, q_fraction_nonconvex, run_fedavg,
    run_safari, QBound, RunSummary, SafariConfig, SafariRun,
};
use crate::learnability::{
    centralized_baseline, check_positively_related, impossibility_failure_rate, pac_rate_experiment,
    ImpossibilityInstance, ImpossibilityReport, PacRateResult, PositivelyRelatedFit, ThresholdInstance,
};
use crate::objectives::{
    Activation, ClientObjective, DataShard, Dataset, HessianSpec, LogisticObjective, MlpObjective, ModelPoint,
};
use crate::par;
use crate::population::{
    fedavg_fixed_point, label_partition, make_quadratic_population, ClientSpec, ParticipationProcess,
    PopulationSpec, QuadraticPopulationParams, ServerObjective,
};
use crate::rng::{Purpose, Stream};
use crate::stats::{fit_loglog_slope, mean, LogLogFit};

/// Fully resolved values of the sweep axes for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub q: f64,
    pub s: usize,
    pub p: usize,
    pub n_t: usize,
    pub rounds: usize,
    pub m: usize,
    pub local_steps: usize,
}

/// Expands the sweep axes into named cells, in a fixed order.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Vec<(String, CellParams)> {
    let sw = &cfg.sweep;
    let pick = |axis: &Vec<usize>, base: usize| if axis.is_empty() { vec![base] } else { axis.clone() };
    let qs = if sw.q.is_empty() { vec![cfg.algorithm.q] } else { sw.q.clone() };
    let mut cells = Vec::new();
    for &q in &qs {
        for &s in &pick(&sw.s, cfg.participation.s) {
            for &p in &pick(&sw.p, cfg.population.labels_per_client) {
                for &n_t in &pick(&sw.n_t, cfg.population.n_t) {
                    for &m in &pick(&sw.m, cfg.participation.m) {
                        for &k in &pick(&sw.local_steps, cfg.algorithm.local_steps) {
                            for &rounds in &pick(&sw.rounds, cfg.algorithm.rounds) {
                                let mut name = Vec::new();
                                if !sw.q.is_empty() {
                                    name.push(format!("q{q}"));
                                }
                                for (axis, tag, v) in [
                                    (&sw.s, "s", s),
                                    (&sw.p, "p", p),
                                    (&sw.n_t, "nt", n_t),
                                    (&sw.m, "m", m),
                                    (&sw.local_steps, "K", k),
                                    (&sw.rounds, "R", rounds),
                                ] {
                                    if !axis.is_empty() {
                                        name.push(format!("{tag}{v}"));
                                    }
                                }
                                let name = if name.is_empty() { "base".to_string() } else { name.join("_") };
                                cells.push((name, CellParams { q, s, p, n_t, rounds, m, local_steps: k }));
                            }
                        }
                    }
                }
            }
        }
    }
    cells
}

/// Synthetic two-class data for the MLP scenarios: client `i` draws balanced
/// labels, class means `±1.5 e₁`, unit Gaussian noise, and an input shift of
/// the configured magnitude in direction `2πi/M`.
pub fn synthetic_client_data(cfg: &ExperimentConfig) -> Result<(Arc<Dataset>, Vec<Vec<usize>>)> {
    let pop = &cfg.population;
    let dim = pop.dim;
    if dim < 2 {
        return Err(Error::Config("MLP scenarios need population.dim >= 2".into()));
    }
    let n = pop.samples_per_client;
    let mut features = Vec::with_capacity(pop.clients * n * dim);
    let mut labels = Vec::with_capacity(pop.clients * n);
    let mut shards = Vec::with_capacity(pop.clients);
    for i in 0..pop.clients {
        let mut rng = Stream::new(pop.seed, Purpose::Data, 0, i as u64);
        let angle = std::f64::consts::TAU * i as f64 / pop.clients as f64;
        let start = labels.len();
        for j in 0..n {
            let y = j % 2;
            for c in 0..dim {
                let class_mean = if c == 0 { if y == 1 { 1.5 } else { -1.5 } } else { 0.0 };
                let shift = match c {
                    0 => pop.shift * angle.cos(),
                    1 => pop.shift * angle.sin(),
                    _ => 0.0,
                };
                features.push(class_mean + shift + rng.normal());
            }
            labels.push(y);
        }
        shards.push((start..labels.len()).collect());
    }
    Ok((Arc::new(Dataset::new(features, labels, dim, 2)?), shards))
}

fn data_population(shards: Vec<(ClientObjective, usize)>) -> Result<PopulationSpec> {
    let total: usize = shards.iter().map(|s| s.1).sum();
    if total == 0 {
        return Err(Error::Data("partition assigned no samples".into()));
    }
    let clients = shards
        .into_iter()
        .enumerate()
        .map(|(id, (objective, count))| {
            if count == 0 {
                return Err(Error::Data(format!("client {id} received no samples")));
            }
            Ok(ClientSpec { id, objective, weight: count as f64 / total as f64, sample_count: count })
        })
        .collect::<Result<Vec<_>>>()?;
    PopulationSpec::new(clients, None, None)
}

/// MLP population and a server objective on the pooled client data.
pub fn mlp_population(cfg: &ExperimentConfig) -> Result<(PopulationSpec, ServerObjective)> {
    let pop = &cfg.population;
    let (data, shards) = synthetic_client_data(cfg)?;
    let layers = vec![pop.dim, pop.hidden, 2];
    let clients = shards
        .into_iter()
        .map(|idx| {
            let count = idx.len();
            let shard = DataShard::new(data.clone(), idx)?;
            Ok((ClientObjective::Mlp(MlpObjective::new(layers.clone(), Activation::Tanh, shard, pop.batch_size)?), count))
        })
        .collect::<Result<Vec<_>>>()?;
    let population = data_population(clients)?;
    let pooled = MlpObjective::new(layers, Activation::Tanh, DataShard::full(data.clone())?, pop.batch_size)?;
    let n = data.len();
    Ok((population, ServerObjective::from_dataset(ClientObjective::Mlp(pooled), n)))
}

pub fn quadratic_population(cfg: &ExperimentConfig) -> Result<(PopulationSpec, ServerObjective)> {
    let pop = &cfg.population;
    let params = QuadraticPopulationParams {
        hessian: HessianSpec::Scalar(pop.hessian),
        center: Some(ModelPoint::new(vec![pop.center; pop.dim])?),
        ..QuadraticPopulationParams::balanced(pop.clients, pop.dim, pop.spread, pop.sigma, pop.seed)
    };
    let population = make_quadratic_population(&params)?;
    let server = ServerObjective::for_quadratic_population(&population, pop.sigma_s, None)?;
    Ok((population, server))
}

/// MNIST train/test sets, loaded before any output is written.
#[derive(Debug, Clone)]
pub struct MnistData {
    pub train: Arc<Dataset>,
    pub test: Arc<Dataset>,
}

pub fn load_mnist(cfg: &ExperimentConfig) -> Result<MnistData> {
    let d = &cfg.data;
    let need = |p: &Option<PathBuf>, key: &str| {
        p.clone().ok_or_else(|| Error::Config(format!("mnist-lr needs data.{key}")))
    };
    let train_images = need(&d.train_images, "train_images")?;
    let train_labels = need(&d.train_labels, "train_labels")?;
    for path in [&train_images, &train_labels].into_iter().chain(d.test_images.as_ref()).chain(d.test_labels.as_ref()) {
        if !path.exists() {
            return Err(Error::DatasetNotFound(path.clone()));
        }
    }
    let train = Arc::new(load_mnist_idx(&train_images, &train_labels)?);
    let test = match (&d.test_images, &d.test_labels) {
        (Some(i), Some(l)) => Arc::new(load_mnist_idx(i, l)?),
        (None, None) => train.clone(),
        _ => return Err(Error::Config("data.test_images and data.test_labels go together".into())),
    };
    Ok(MnistData { train, test })
}

pub fn mnist_population(cfg: &ExperimentConfig, data: &MnistData, cell: &CellParams) -> Result<(PopulationSpec, ServerObjective)> {
    let pop = &cfg.population;
    let mut rng = Stream::new(pop.seed, Purpose::Partition, cell.p as u64, 0);
    let parts = label_partition(data.train.labels(), cell.p, pop.clients, &mut rng)?;
    let clients = parts
        .into_iter()
        .map(|idx| {
            let count = idx.len();
            let shard = DataShard::new(data.train.clone(), idx)?;
            Ok((ClientObjective::Logistic(LogisticObjective::new(shard, pop.l2, pop.batch_size)?), count))
        })
        .collect::<Result<Vec<_>>>()?;
    let population = data_population(clients)?;
    if cell.n_t == 0 || cell.n_t > data.train.len() {
        return Err(Error::Config(format!("n_t = {} must lie in 1..={}", cell.n_t, data.train.len())));
    }
    let server_idx = Stream::new(pop.seed, Purpose::Data, cell.n_t as u64, 0).subset(data.train.len(), cell.n_t);
    let server_shard = DataShard::new(data.train.clone(), server_idx)?;
    let server = LogisticObjective::new(server_shard, pop.l2, pop.batch_size)?;
    Ok((population, ServerObjective::from_dataset(ClientObjective::Logistic(server), cell.n_t)))
}

/// Closed-form reference values attached to a cell summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellReference {
    pub sigma_g: Option<f64>,
    /// `‖x̄_included − x*‖²`: distance from FedAvg's fixed point under
    /// exclusion to the population optimum.
    pub bias_sq: Option<f64>,
}

/// Post-hoc diagnostics of one run that are not recoverable from the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub g1: Option<f64>,
    pub g2: Option<f64>,
    pub g3_mean: f64,
    pub g4_mean: Option<f64>,
    pub q_bound_nonconvex: Option<QBound>,
    /// Tightest bound over client rounds, each evaluated at that round's
    /// `G3`, `G4`.
    pub q_bound_strongly_convex: Option<QBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub seed: u64,
    pub q: f64,
    pub eta_c: f64,
    pub eta_s: f64,
    pub summary: RunSummary,
    pub diagnostics: RunDiagnostics,
    pub test_accuracy: Option<f64>,
    pub warnings: Vec<String>,
}

/// Seed means of the per-run summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub mean_final_grad_norm_sq: f64,
    pub mean_final_dist_sq: Option<f64>,
    pub mean_min_grad_norm_sq: f64,
    pub mean_tail_grad_norm_sq: f64,
    pub mean_tail_dist_sq: Option<f64>,
    pub mean_test_accuracy: Option<f64>,
}

impl CellAggregate {
    pub fn from_summaries(summaries: &[&RunSummary], accuracies: &[Option<f64>]) -> Self {
        let opt_mean = |v: Vec<Option<f64>>| v.into_iter().collect::<Option<Vec<f64>>>().map(|v| mean(&v));
        Self {
            mean_final_grad_norm_sq: mean(&summaries.iter().map(|s| s.final_grad_norm_sq).collect::<Vec<_>>()),
            mean_final_dist_sq: opt_mean(summaries.iter().map(|s| s.final_dist_sq).collect()),
            mean_min_grad_norm_sq: mean(&summaries.iter().map(|s| s.min_grad_norm_sq).collect::<Vec<_>>()),
            mean_tail_grad_norm_sq: mean(&summaries.iter().map(|s| s.tail_mean_grad_norm_sq).collect::<Vec<_>>()),
            mean_tail_dist_sq: opt_mean(summaries.iter().map(|s| s.tail_mean_dist_sq).collect()),
            mean_test_accuracy: opt_mean(accuracies.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scenario: Scenario,
    pub cell: String,
    pub config_hash: String,
    pub params: CellParams,
    pub reference: CellReference,
    pub runs: Vec<RunEntry>,
    pub aggregate: CellAggregate,
}

/// Log-log fit of a seed-averaged metric against `R` for one group of cells
/// that differ only in `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub group: String,
    pub metric: String,
    pub rounds: Vec<usize>,
    pub values: Vec<f64>,
    pub fit: LogLogFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: Scenario,
    pub config_hash: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<String>,
    pub files: Vec<String>,
    pub config: ExperimentConfig,
}

/// Metric whose dependence on `R` is fitted for a rate scenario.
pub fn rate_metric(scenario: Scenario) -> Option<&'static str> {
    match scenario {
        Scenario::SconvexRate => Some("final_dist_sq"),
        Scenario::NonconvexRate => Some("min_grad_norm_sq"),
        _ => None,
    }
}

fn metric_value(agg: &CellAggregate, metric: &str) -> Option<f64> {
    match metric {
        "final_dist_sq" => agg.mean_final_dist_sq,
        "min_grad_norm_sq" => Some(agg.mean_min_grad_norm_sq),
        _ => None,
    }
}

/// Groups cells by everything but `R` and fits the scenario's metric against
/// `R` in each group with at least three points.
pub fn rate_fits(scenario: Scenario, cells: &[(CellParams, CellAggregate)]) -> Result<Vec<RateFit>> {
    let Some(metric) = rate_metric(scenario) else { return Ok(Vec::new()) };
    let mut groups: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for (p, agg) in cells {
        let key = format!("q{}_s{}_p{}_nt{}_m{}_K{}", p.q, p.s, p.p, p.n_t, p.m, p.local_steps);
        if let Some(v) = metric_value(agg, metric) {
            groups.entry(key).or_default().push((p.rounds, v));
        }
    }
    let mut fits = Vec::new();
    for (group, mut pts) in groups {
        if pts.len() < 3 {
            continue;
        }
        pts.sort_by_key(|p| p.0);
        let (rounds, values): (Vec<usize>, Vec<f64>) = pts.into_iter().unzip();
        let xs: Vec<f64> = rounds.iter().map(|&r| r as f64).collect();
        let fit = fit_loglog_slope(&xs, &values)?;
        fits.push(RateFit { group, metric: metric.to_string(), rounds, values, fit });
    }
    Ok(fits)
}

struct CellContext {
    name: String,
    params: CellParams,
    population: PopulationSpec,
    server: ServerObjective,
    process: ParticipationProcess,
    reference: CellReference,
    test: Option<Arc<Dataset>>,
}

fn build_cell(cfg: &ExperimentConfig, mnist: Option<&MnistData>, name: String, params: CellParams) -> Result<CellContext> {
    let (population, server) = match cfg.scenario {
        Scenario::SconvexRate | Scenario::FedavgBias => quadratic_population(cfg)?,
        Scenario::NonconvexRate | Scenario::Speedup => mlp_population(cfg)?,
        Scenario::MnistLr => mnist_population(cfg, mnist.expect("mnist loaded"), &params)?,
        other => return Err(Error::Config(format!("{other} is not a training scenario"))),
    };
    let process = if params.s > 0 {
        ParticipationProcess::Excluded { s: params.s, m: params.m }
    } else if params.m == population.len() {
        ParticipationProcess::Full
    } else {
        ParticipationProcess::Uniform { m: params.m }
    };
    process.validate(population.len())?;
    let mut reference = CellReference { sigma_g: population.sigma_g(), bias_sq: None };
    if let Some(opt) = population.global_optimum() {
        let included = process.eligible(population.len());
        if population.common_hessian().is_some() {
            reference.bias_sq = Some(fedavg_fixed_point(&population, &included)?.dist_sq(opt));
        }
    }
    let test = mnist.map(|d| d.test.clone());
    Ok(CellContext { name, params, population, server, process, reference, test })
}

fn local_steps_for(ctx: &CellContext, cfg: &ExperimentConfig) -> usize {
    if ctx.params.local_steps > 0 {
        return ctx.params.local_steps;
    }
    // one local epoch: mean shard size over the batch size
    let mean_count = ctx.population.clients().iter().map(|c| c.sample_count).sum::<usize>() as f64
        / ctx.population.len() as f64;
    ((mean_count / cfg.population.batch_size as f64).ceil() as usize).max(1)
}

/// Builds the algorithm configuration of one run.
pub fn safari_config(cfg: &ExperimentConfig, params: &CellParams, local_steps: usize, seed: u64) -> SafariConfig {
    let q = match cfg.algorithm.q_rule {
        QRule::Fixed => params.q,
        QRule::OneMinusInvMk => 1.0 - 1.0 / (params.m * local_steps) as f64,
    };
    let eta_s = cfg.eta_s_for(params.rounds);
    let mut sc = if cfg.algorithm.couple_steps {
        SafariConfig::coupled(q, eta_s, local_steps, params.rounds, seed)
    } else {
        SafariConfig::uncoupled(q, cfg.algorithm.eta_c, eta_s, local_steps, params.rounds, seed)
    };
    sc.track_diagnostics = cfg.algorithm.track_diagnostics;
    sc
}

fn diagnostics_for(ctx: &CellContext, sc: &SafariConfig, run: &SafariRun, warnings: &mut Vec<String>, band_c: Option<f64>) -> Result<RunDiagnostics> {
    let d = &run.diagnostics;
    let consts = ctx.population.constants();
    let g4_mean = (!d.g4.is_empty()).then(|| mean(&d.g4.iter().map(|g| g.1).collect::<Vec<_>>()));
    let g3_mean = mean(&d.g3);
    let mut q_nc = None;
    let mut q_sc = None;
    if let (Some(sg), Some(l), Some(g1), Some(g2)) = (ctx.population.sigma_g(), consts.lipschitz, d.g1, d.g2) {
        q_nc = Some(q_bound_nonconvex(sg * sg, g1, g2, sc.local_steps, l, sc.eta_s)?);
        if let (Some(c), Some(ratio)) = (band_c, run.summary.server_client_ratio) {
            let frac = q_fraction_nonconvex(sg * sg, g1, g2, sc.local_steps, l, sc.eta_s)?;
            match frac.and_then(|f| admissible_ratio_band(f, c, ctx.params.m, sc.local_steps)) {
                Some((lo, hi)) if ratio < lo || ratio > hi => warnings.push(format!(
                    "realised R_s/R_c = {ratio:.4} outside admissible band [{lo:.4}, {hi:.4}]"
                )),
                None => warnings.push("admissible R_s/R_c band is empty or undefined".into()),
                _ => {}
            }
        }
    }
    if let (Some(l), Some(mu)) = (consts.lipschitz, consts.strong_convexity) {
        let eb = eta_bar(sc.client_step(), sc.local_steps, mu);
        if eb <= 4.0 * l * mu / (l + mu).powi(2) && !d.g4.is_empty() {
            let per_round = d
                .g4
                .iter()
                .map(|&(r, g4)| q_bound_strongly_convex(d.g3[r], g4, l, mu, eb))
                .collect::<Result<Vec<_>>>()?;
            let bound = tightest(per_round);
            if let Some(q_max) = bound.q_max().filter(|&q| sc.q > q) {
                warnings.push(format!("q = {} exceeds the tightest per-round strongly convex bound {q_max:.4}", sc.q));
            }
            q_sc = Some(bound);
        }
    }
    Ok(RunDiagnostics { g1: d.g1, g2: d.g2, g3_mean, g4_mean, q_bound_nonconvex: q_nc, q_bound_strongly_convex: q_sc })
}

/// The binding per-round bound: the smallest bounded value, else vacuous when
/// any round is, else the first undefined reason.
fn tightest(bounds: Vec<QBound>) -> QBound {
    let min = bounds.iter().filter_map(|b| match b {
        QBound::Bounded(q) => Some(*q),
        _ => None,
    }).reduce(f64::min);
    match min {
        Some(q) => QBound::Bounded(q),
        None if bounds.iter().any(QBound::is_vacuous) => QBound::Vacuous,
        None => bounds.into_iter().next().unwrap_or(QBound::Undefined("no client rounds".into())),
    }
}

fn run_one(cfg: &ExperimentConfig, ctx: &CellContext, seed: u64, dir: &Path) -> Result<RunEntry> {
    let k = local_steps_for(ctx, cfg);
    let mut sc = safari_config(cfg, &ctx.params, k, seed);
    if let Some(mlp) = mlp_of(ctx.population.client(0)) {
        sc.x0 = Some(mlp.init_point(&mut Stream::new(seed, Purpose::Init, 0, 0)));
    }
    let run = if cfg.scenario == Scenario::FedavgBias {
        run_fedavg(&ctx.population, &ctx.process, &sc)?
    } else {
        run_safari(&ctx.population, &ctx.process, Some(&ctx.server), &sc)?
    };
    std::fs::write(dir.join(format!("seed-{seed}.csv")), records_to_csv(&run.records))?;
    let mut warnings = run.warnings.clone();
    let diagnostics = diagnostics_for(ctx, &sc, &run, &mut warnings, cfg.algorithm.ratio_band_c)?;
    let test_accuracy = ctx.test.as_ref().map(|t| {
        let shard = DataShard::full(t.clone()).expect("non-empty test set");
        LogisticObjective::accuracy(&run.final_model, &shard)
    });
    Ok(RunEntry {
        seed,
        q: sc.q,
        eta_c: sc.client_step(),
        eta_s: sc.eta_s,
        summary: run.summary,
        diagnostics,
        test_accuracy,
        warnings,
    })
}

/// Where `run_experiment` put its outputs.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub fits: Vec<RateFit>,
}

fn cell_dir(out: &Path, cell: &str) -> PathBuf {
    out.join("cells").join(cell)
}

/// Runs every sweep cell and seed of a training scenario (or the Monte-Carlo
/// study of a learnability scenario) and writes CSVs, per-cell JSON summaries
/// and the manifest under `cfg.out_dir`.
///
/// `workers` bounds the thread pool (`0` = all cores); outputs do not depend
/// on it.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    cfg.validate()?;
    par::with_workers(workers, || match cfg.scenario {
        s if s.is_training() => run_training(cfg),
        _ => run_learnability(cfg),
    })
}

fn run_training(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mnist = match cfg.scenario {
        Scenario::MnistLr => Some(load_mnist(cfg)?),
        _ => None,
    };
    let hash = cfg.hash();
    let contexts = sweep_cells(cfg)
        .into_iter()
        .map(|(name, params)| build_cell(cfg, mnist.as_ref(), name, params))
        .collect::<Result<Vec<_>>>()?;
    let out = cfg.out_dir.clone();
    for ctx in &contexts {
        std::fs::create_dir_all(cell_dir(&out, &ctx.name))?;
    }
    let seeds = &cfg.sweep.seeds;
    let jobs: Vec<(usize, u64)> = (0..contexts.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let entries = par::try_map_indices(jobs.len(), |j| {
        let (c, seed) = jobs[j];
        run_one(cfg, &contexts[c], seed, &cell_dir(&out, &contexts[c].name))
    })?;

    let mut files = Vec::new();
    let mut aggregates = Vec::new();
    for (c, ctx) in contexts.iter().enumerate() {
        let runs: Vec<RunEntry> = entries[c * seeds.len()..(c + 1) * seeds.len()].to_vec();
        let summaries: Vec<&RunSummary> = runs.iter().map(|r| &r.summary).collect();
        let accs: Vec<Option<f64>> = runs.iter().map(|r| r.test_accuracy).collect();
        let aggregate = CellAggregate::from_summaries(&summaries, &accs);
        aggregates.push((ctx.params.clone(), aggregate.clone()));
        let summary = CellSummary {
            scenario: cfg.scenario,
            cell: ctx.name.clone(),
            config_hash: hash.clone(),
            params: ctx.params.clone(),
            reference: ctx.reference.clone(),
            runs,
            aggregate,
        };
        write_json(&cell_dir(&out, &ctx.name).join("summary.json"), &summary)?;
        for s in seeds {
            files.push(format!("cells/{}/seed-{s}.csv", ctx.name));
        }
        files.push(format!("cells/{}/summary.json", ctx.name));
    }
    let fits = rate_fits(cfg.scenario, &aggregates)?;
    if !fits.is_empty() {
        write_json(&out.join("fits.json"), &fits)?;
        files.push("fits.json".into());
    }
    finish(cfg, &out, hash, contexts.iter().map(|c| c.name.clone()).collect(), files, fits)
}

fn finish(cfg: &ExperimentConfig, out: &Path, hash: String, cells: Vec<String>, files: Vec<String>, fits: Vec<RateFit>) -> Result<ExperimentOutput> {
    let manifest = Manifest {
        scenario: cfg.scenario,
        config_hash: hash,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: cfg.sweep.seeds.clone(),
        cells,
        files,
        config: cfg.clone(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(ExperimentOutput { out_dir: out.to_path_buf(), manifest, fits })
}

/// Summary of the threshold-class PAC study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacSummary {
    pub config_hash: String,
    pub instance: ThresholdInstance,
    pub mixture: PacRateResult,
    /// `n_T` matched to each grid point.
    pub n_t: Vec<usize>,
    pub centralized: Vec<f64>,
    /// Training on client data alone, as a contrast.
    pub client_only: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivelyRelatedSummary {
    pub config_hash: String,
    pub instance: ThresholdInstance,
    pub t_grid: Vec<f64>,
    pub fit: PositivelyRelatedFit,
    /// `1 − (b′ − a′)/(b − a)`.
    pub alpha_closed_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpossibilitySummary {
    pub config_hash: String,
    pub report: ImpossibilityReport,
}

/// Runs the threshold PAC study: SA-FL mixture rate, centralized baseline at
/// matched `n_T` and the client-only contrast.
pub fn pac_study(cfg: &ExperimentConfig, seed: u64) -> Result<PacSummary> {
    let l = &cfg.learnability;
    let n_t: Vec<usize> = l.n_grid.iter().map(|&n| ((n as f64 * l.server_fraction).round() as usize).max(1)).collect();
    let inst = ThresholdInstance {
        a: l.a,
        b: l.b,
        a_d: l.a_d,
        b_d: l.b_d,
        t_star: l.t_star,
        lambda1: 1.0 - l.server_fraction,
        lambda2: l.server_fraction,
    };
    let mixture = pac_rate_experiment(&inst, &l.n_grid, l.trials, seed)?;
    let centralized = n_t
        .iter()
        .enumerate()
        .map(|(i, &nt)| centralized_baseline(&inst, nt, l.trials, seed.wrapping_add(1 + i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let client_inst = ThresholdInstance { lambda1: 1.0, lambda2: 0.0, ..inst };
    let client_only = pac_rate_experiment(&client_inst, &l.n_grid, l.trials, seed.wrapping_add(1000))?.mean_excess;
    Ok(PacSummary { config_hash: cfg.hash(), instance: inst, mixture, n_t, centralized, client_only })
}

pub fn positively_related_study(cfg: &ExperimentConfig) -> Result<PositivelyRelatedSummary> {
    let l = &cfg.learnability;
    let inst = ThresholdInstance {
        a: l.a,
        b: l.b,
        a_d: l.a_d,
        b_d: l.b_d,
        t_star: l.t_star,
        lambda1: l.lambda1,
        lambda2: 1.0 - l.lambda1,
    };
    let n = l.t_grid_points.max(2);
    let t_grid: Vec<f64> = (0..n).map(|i| l.a_d + (l.b_d - l.a_d) * i as f64 / (n - 1) as f64).collect();
    let fit = check_positively_related(&inst, &t_grid)?;
    Ok(PositivelyRelatedSummary {
        config_hash: cfg.hash(),
        instance: inst,
        t_grid,
        fit,
        alpha_closed_form: 1.0 - (l.b_d - l.a_d) / (l.b - l.a),
    })
}

fn run_learnability(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let out = cfg.out_dir.clone();
    let hash = cfg.hash();
    let seed = cfg.sweep.seeds.first().copied().unwrap_or(0);
    let l = &cfg.learnability;
    let mut cells = Vec::new();
    let mut files = Vec::new();
    let mut emit = |name: String, value: serde_json::Value| -> Result<()> {
        let dir = cell_dir(&out, &name);
        std::fs::create_dir_all(&dir)?;
        write_json(&dir.join("summary.json"), &value)?;
        files.push(format!("cells/{name}/summary.json"));
        cells.push(name);
        Ok(())
    };
    match cfg.scenario {
        Scenario::Impossibility => {
            for &omega in &l.omega {
                for &n in &l.samples {
                    let inst = ImpossibilityInstance::new(l.clients, n, omega, l.trials)?;
                    let report = impossibility_failure_rate(&inst, seed)?;
                    let summary = ImpossibilitySummary { config_hash: hash.clone(), report };
                    emit(format!("omega{omega}_n{n}"), serde_json::to_value(summary)?)?;
                }
            }
        }
        Scenario::Pac => emit("pac".into(), serde_json::to_value(pac_study(cfg, seed)?)?)?,
        Scenario::PositivelyRelated => {
            emit("positively-related".into(), serde_json::to_value(positively_related_study(cfg)?)?)?
        }
        other => return Err(Error::Config(format!("{other} is not a learnability scenario"))),
    }
    finish(cfg, &out, hash, cells, files, Vec::new())
}

fn mlp_of(spec: &ClientSpec) -> Option<&MlpObjective> {
    match &spec.objective {
        ClientObjective::Mlp(m) => Some(m),
        _ => None,
    }
}
