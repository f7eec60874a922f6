use super::config::SafariConfig;
use super::record::{DiagnosticStats, RoundKind, RoundRecord, RunSummary};
use super::DIVERGENCE_NORM;
use crate::error::{Error, Result};
use crate::objectives::ModelPoint;
use crate::par;
use crate::population::{sample_participation, ClientSpec, ParticipationProcess, PopulationSpec, ServerObjective};
use crate::rng::{Purpose, Stream};

/// Output of one simulated training run.
#[derive(Debug, Clone)]
pub struct SafariRun {
    pub summary: RunSummary,
    pub records: Vec<RoundRecord>,
    pub diagnostics: DiagnosticStats,
    pub final_model: ModelPoint,
    pub warnings: Vec<String>,
}

fn check_iterate(x: &ModelPoint, round: usize, last_norm: f64) -> Result<()> {
    let norm = x.norm();
    if !x.is_finite() || !norm.is_finite() || norm > DIVERGENCE_NORM {
        return Err(Error::Divergence { round, last_norm });
    }
    Ok(())
}

/// Runs `K` local SGD steps from `x` on one client and returns the final local
/// model.
pub fn local_update(
    x: &ModelPoint,
    client: &ClientSpec,
    steps: usize,
    eta_c: f64,
    rng: &mut Stream,
) -> Result<ModelPoint> {
    local_update_traced(x, client, steps, eta_c, rng, 0, false).map(|(m, _)| m)
}

/// As [`local_update`], optionally also summing the exact client gradient at
/// every inner iterate (the `Σ_k ∇F_i(x^i_{r,k})` term of `G2`).
fn local_update_traced(
    x: &ModelPoint,
    client: &ClientSpec,
    steps: usize,
    eta_c: f64,
    rng: &mut Stream,
    round: usize,
    trace: bool,
) -> Result<(ModelPoint, Option<ModelPoint>)> {
    if !(eta_c.is_finite() && eta_c >= 0.0) {
        return Err(Error::InvalidParameter(format!("client step must be >= 0, got {eta_c}")));
    }
    x.check_dim(client.objective.dim())?;
    let mut local = x.clone();
    let mut grad_sum = trace.then(|| ModelPoint::zeros(x.dim()));
    for _ in 0..steps {
        if let Some(sum) = grad_sum.as_mut() {
            sum.axpy(1.0, &client.objective.exact_gradient(&local)?);
        }
        let last_norm = local.norm();
        let g = client
            .objective
            .stochastic_gradient(&local, rng)
            .map_err(|_| Error::Divergence { round, last_norm })?;
        local.axpy(-eta_c, &g);
        check_iterate(&local, round, last_norm)?;
    }
    Ok((local, grad_sum))
}

/// Coordinate-wise mean of `(client id, model)` pairs, summed in ascending id
/// order so that the result does not depend on input order.
pub fn aggregate(models: &[(usize, ModelPoint)]) -> Result<ModelPoint> {
    let mut ordered: Vec<&(usize, ModelPoint)> = models.iter().collect();
    ordered.sort_by_key(|(id, _)| *id);
    let (_, first) = ordered
        .first()
        .ok_or_else(|| Error::InvalidParameter("cannot aggregate an empty model list".into()))?;
    let dim = first.dim();
    let mut total = ModelPoint::zeros(dim);
    for (_, m) in &ordered {
        m.check_dim(dim)?;
        total.axpy(1.0, m);
    }
    Ok(total.scaled(1.0 / ordered.len() as f64))
}

/// One server SGD step `x − η_s ∇F(x, ξ)` on the auxiliary objective.
pub fn server_step(x: &ModelPoint, server: &ServerObjective, eta_s: f64, rng: &mut Stream) -> Result<ModelPoint> {
    if !(eta_s.is_finite() && eta_s >= 0.0) {
        return Err(Error::InvalidParameter(format!("server step must be >= 0, got {eta_s}")));
    }
    let g = server.stochastic_gradient(x, rng)?;
    let mut next = x.clone();
    next.axpy(-eta_s, &g);
    Ok(next)
}

struct Tracker<'a> {
    pop: &'a PopulationSpec,
    records: Vec<RoundRecord>,
    diagnostics: DiagnosticStats,
}

impl<'a> Tracker<'a> {
    fn new(pop: &'a PopulationSpec, rounds: usize) -> Self {
        Self {
            pop,
            records: Vec::with_capacity(rounds + 1),
            diagnostics: DiagnosticStats::default(),
        }
    }

    fn record(&mut self, round: usize, kind: RoundKind, x: &ModelPoint, participants: Option<Vec<usize>>) -> Result<()> {
        let (loss, grad) = self.pop.loss_and_gradient(x)?;
        let grad_norm_sq = grad.norm_sq();
        let dist_sq = self.pop.global_optimum().map(|opt| x.dist_sq(opt));
        if kind == RoundKind::Server {
            self.diagnostics.g1 = Some(self.diagnostics.g1.map_or(grad_norm_sq, |g| g.max(grad_norm_sq)));
        }
        self.diagnostics.g3.push(grad_norm_sq);
        self.records.push(RoundRecord {
            round,
            kind,
            grad_norm_sq,
            dist_sq,
            loss,
            participants,
        });
        Ok(())
    }

    fn finish(self, final_model: ModelPoint, warnings: Vec<String>) -> SafariRun {
        let summary = RunSummary::from_records(&self.records).expect("at least one record");
        SafariRun {
            summary,
            records: self.records,
            diagnostics: self.diagnostics,
            final_model,
            warnings,
        }
    }
}

fn initial_point(pop: &PopulationSpec, cfg: &SafariConfig) -> Result<ModelPoint> {
    match &cfg.x0 {
        Some(x0) => {
            x0.check_dim(pop.dim())?;
            x0.ensure_finite("initial point")?;
            Ok(x0.clone())
        }
        None => Ok(ModelPoint::zeros(pop.dim())),
    }
}

/// Client round: sample participants, run local updates concurrently, average.
fn client_round(
    pop: &PopulationSpec,
    process: &ParticipationProcess,
    cfg: &SafariConfig,
    round: usize,
    x: &ModelPoint,
    diagnostics: Option<&mut DiagnosticStats>,
) -> Result<(ModelPoint, Vec<usize>)> {
    let mut prng = Stream::new(cfg.seed, Purpose::Participation, round as u64, 0);
    let participants = sample_participation(process, pop.len(), &mut prng)?;
    let eta_c = cfg.client_step();
    let trace = diagnostics.is_some();
    let updates = par::try_map_indices(participants.len(), |k| {
        let id = participants[k];
        let mut rng = Stream::new(cfg.seed, Purpose::ClientNoise, round as u64, id as u64);
        local_update_traced(x, pop.client(id), cfg.local_steps, eta_c, &mut rng, round, trace)
            .map(|(m, g)| (id, m, g))
    })?;
    if let Some(diag) = diagnostics {
        let m = participants.len() as f64;
        let mut inner = ModelPoint::zeros(x.dim());
        for (_, _, g) in &updates {
            if let Some(g) = g {
                inner.axpy(1.0, g);
            }
        }
        let g2 = inner.scaled(1.0 / m).norm_sq();
        diag.g2 = Some(diag.g2.map_or(g2, |v| v.max(g2)));
        if let Some(opt) = pop.global_optimum() {
            let mut gap = 0.0;
            for &id in &participants {
                let obj = &pop.client(id).objective;
                gap += obj.loss(x)? - obj.loss(opt)?;
            }
            diag.g4.push((round, gap / m));
        }
    }
    let models: Vec<(usize, ModelPoint)> = updates.into_iter().map(|(id, m, _)| (id, m)).collect();
    Ok((aggregate(&models)?, participants))
}

/// Runs the SAFARI loop: each round is a client round with probability `q`
/// (FedAvg-style local updates on the sampled clients, then averaging) and a
/// server SGD step on the auxiliary objective otherwise.
///
/// The per-round coin, the participation draw, each client's gradient noise
/// and the server's gradient noise all come from separate streams, so the
/// realised trajectory is a deterministic function of `cfg.seed`.
pub fn run_safari(
    pop: &PopulationSpec,
    process: &ParticipationProcess,
    server: Option<&ServerObjective>,
    cfg: &SafariConfig,
) -> Result<SafariRun> {
    cfg.validate()?;
    process.validate(pop.len())?;
    if cfg.q < 1.0 {
        let server = server.ok_or_else(|| {
            Error::InvalidParameter("q < 1 requires a server objective".into())
        })?;
        if server.dim() != pop.dim() {
            return Err(Error::DimensionMismatch { expected: pop.dim(), actual: server.dim() });
        }
    }
    let mut x = initial_point(pop, cfg)?;
    let mut tracker = Tracker::new(pop, cfg.rounds);
    for r in 0..cfg.rounds {
        let is_client = Stream::new(cfg.seed, Purpose::Coin, r as u64, 0).bernoulli(cfg.q);
        let last_norm = x.norm();
        if is_client {
            let diag = cfg.track_diagnostics.then_some(&mut tracker.diagnostics);
            let (next, participants) = client_round(pop, process, cfg, r, &x, diag)?;
            tracker.record(r, RoundKind::Client, &x, Some(participants))?;
            x = next;
        } else {
            let server = server.expect("checked above");
            let mut rng = Stream::new(cfg.seed, Purpose::ServerNoise, r as u64, 0);
            let next = server_step(&x, server, cfg.eta_s, &mut rng)
                .map_err(|_| Error::Divergence { round: r, last_norm })?;
            tracker.record(r, RoundKind::Server, &x, None)?;
            x = next;
        }
        check_iterate(&x, r, last_norm)?;
    }
    tracker.record(cfg.rounds, RoundKind::Final, &x, None)?;

    let mut warnings = Vec::new();
    if let Some((lo, hi)) = cfg.ratio_band {
        let s = RunSummary::from_records(&tracker.records).expect("records");
        match s.server_client_ratio {
            Some(ratio) if ratio < lo || ratio > hi => warnings.push(format!(
                "realised R_s/R_c = {ratio:.4} outside admissible band [{lo:.4}, {hi:.4}]"
            )),
            None => warnings.push("no client rounds; R_s/R_c undefined".to_string()),
            _ => {}
        }
    }
    Ok(tracker.finish(x, warnings))
}

/// Plain FedAvg: every round is a client round and no server data is used.
pub fn run_fedavg(pop: &PopulationSpec, process: &ParticipationProcess, cfg: &SafariConfig) -> Result<SafariRun> {
    cfg.validate()?;
    process.validate(pop.len())?;
    let mut x = initial_point(pop, cfg)?;
    let mut tracker = Tracker::new(pop, cfg.rounds);
    for r in 0..cfg.rounds {
        let last_norm = x.norm();
        let diag = cfg.track_diagnostics.then_some(&mut tracker.diagnostics);
        let (next, participants) = client_round(pop, process, cfg, r, &x, diag)?;
        tracker.record(r, RoundKind::Client, &x, Some(participants))?;
        x = next;
        check_iterate(&x, r, last_norm)?;
    }
    tracker.record(cfg.rounds, RoundKind::Final, &x, None)?;
    Ok(tracker.finish(x, Vec::new()))
}

/// Centralized SGD on the server objective alone, with metrics taken against
/// the population loss.
pub fn run_centralized_sgd(pop: &PopulationSpec, server: &ServerObjective, cfg: &SafariConfig) -> Result<SafariRun> {
    cfg.validate()?;
    let mut x = initial_point(pop, cfg)?;
    let mut tracker = Tracker::new(pop, cfg.rounds);
    for r in 0..cfg.rounds {
        let last_norm = x.norm();
        let mut rng = Stream::new(cfg.seed, Purpose::ServerNoise, r as u64, 0);
        let g = server
            .stochastic_gradient(&x, &mut rng)
            .map_err(|_| Error::Divergence { round: r, last_norm })?;
        tracker.record(r, RoundKind::Server, &x, None)?;
        x.axpy(-cfg.eta_s, &g);
        check_iterate(&x, r, last_norm)?;
    }
    tracker.record(cfg.rounds, RoundKind::Final, &x, None)?;
    Ok(tracker.finish(x, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{ClientObjective, HessianSpec, QuadraticObjective};
    use crate::population::{make_quadratic_population, QuadraticPopulationParams};

    fn p(v: &[f64]) -> ModelPoint {
        ModelPoint::new(v.to_vec()).unwrap()
    }

    fn quad_client(h: f64, c: &[f64], sigma: f64) -> ClientSpec {
        ClientSpec {
            id: 0,
            objective: ClientObjective::Quadratic(QuadraticObjective::new(&HessianSpec::Scalar(h), p(c), sigma).unwrap()),
            weight: 1.0,
            sample_count: 1,
        }
    }

    #[test]
    fn local_update_matches_closed_form() {
        let (h, eta, k) = (1.5, 0.1, 7);
        let c = [0.5, -1.0, 2.0];
        let client = quad_client(h, &c, 0.0);
        let x = p(&[3.0, 1.0, -4.0]);
        let out = local_update(&x, &client, k, eta, &mut Stream::new(0, Purpose::ClientNoise, 0, 0)).unwrap();
        let factor = (1.0 - eta * h).powi(k as i32);
        for j in 0..3 {
            let expected = c[j] + factor * (x.as_slice()[j] - c[j]);
            assert!(((out.as_slice()[j] - expected) / expected).abs() <= 1e-10);
        }
    }

    #[test]
    fn local_update_fixed_point_and_zero_step() {
        let client = quad_client(2.0, &[1.0, 1.0], 0.0);
        let mut rng = Stream::new(0, Purpose::ClientNoise, 0, 0);
        assert_eq!(local_update(&p(&[1.0, 1.0]), &client, 5, 0.1, &mut rng).unwrap(), p(&[1.0, 1.0]));
        let noisy = quad_client(2.0, &[1.0, 1.0], 0.5);
        assert_eq!(local_update(&p(&[3.0, -2.0]), &noisy, 5, 0.0, &mut rng).unwrap(), p(&[3.0, -2.0]));
    }

    #[test]
    fn local_update_divergence_is_reported() {
        let client = quad_client(1.0, &[1.0], 0.0);
        let err = local_update(&p(&[1e6]), &client, 200, 3.0, &mut Stream::new(0, Purpose::ClientNoise, 0, 0));
        assert!(matches!(err, Err(Error::Divergence { .. })));
    }

    #[test]
    fn aggregate_basics() {
        assert_eq!(aggregate(&[(3, p(&[1.0, 2.0]))]).unwrap(), p(&[1.0, 2.0]));
        assert_eq!(aggregate(&[(0, p(&[1.0, 0.0])), (1, p(&[0.0, 1.0]))]).unwrap(), p(&[0.5, 0.5]));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn aggregate_is_order_invariant_bitwise() {
        let models: Vec<(usize, ModelPoint)> = (0..7)
            .map(|i| (i, p(&[0.1 * i as f64 + 1e-17, 1.0 / (i as f64 + 3.0), 1e10 * (i as f64).sin()])))
            .collect();
        let forward = aggregate(&models).unwrap();
        let mut reversed = models.clone();
        reversed.reverse();
        reversed.swap(1, 4);
        let shuffled = aggregate(&reversed).unwrap();
        for (a, b) in forward.as_slice().iter().zip(shuffled.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn server_step_closed_form() {
        let pop = make_quadratic_population(&QuadraticPopulationParams {
            hessian: HessianSpec::Diagonal(vec![1.0, 2.0, 0.5]),
            ..QuadraticPopulationParams::balanced(5, 3, 1.0, 0.0, 4)
        })
        .unwrap();
        let server = ServerObjective::for_quadratic_population(&pop, 0.0, None).unwrap();
        let opt = pop.global_optimum().unwrap().clone();
        let mut rng = Stream::new(0, Purpose::ServerNoise, 0, 0);
        assert!(server_step(&opt, &server, 0.3, &mut rng).unwrap().dist_sq(&opt) < 1e-30);
        let x = p(&[2.0, -1.0, 0.5]);
        assert_eq!(server_step(&x, &server, 0.0, &mut rng).unwrap(), x);
        let eta = 0.3;
        let next = server_step(&x, &server, eta, &mut rng).unwrap();
        for (j, h) in [1.0, 2.0, 0.5].iter().enumerate() {
            let expected = (1.0 - eta * h) * (x.as_slice()[j] - opt.as_slice()[j]);
            let actual = next.as_slice()[j] - opt.as_slice()[j];
            assert!((actual - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn q_below_one_needs_server() {
        let pop = make_quadratic_population(&QuadraticPopulationParams::balanced(4, 2, 1.0, 0.0, 1)).unwrap();
        let cfg = SafariConfig::coupled(0.5, 0.1, 2, 4, 0);
        assert!(run_safari(&pop, &ParticipationProcess::Full, None, &cfg).is_err());
    }

    #[test]
    fn rounds_partition_into_client_and_server() {
        let pop = make_quadratic_population(&QuadraticPopulationParams::balanced(6, 3, 1.0, 0.1, 1)).unwrap();
        let server = ServerObjective::for_quadratic_population(&pop, 0.1, None).unwrap();
        let cfg = SafariConfig::coupled(0.4, 0.05, 3, 200, 9);
        let run = run_safari(&pop, &ParticipationProcess::Uniform { m: 3 }, Some(&server), &cfg).unwrap();
        let s = &run.summary;
        assert_eq!(s.client_rounds + s.server_rounds, 200);
        assert_eq!(run.records.len(), 201);
        assert_eq!(run.diagnostics.g3.len(), 201);
        assert_eq!(s.g1, run.diagnostics.g1);
        assert!(run.diagnostics.g2.unwrap() >= 0.0);
    }

    #[test]
    fn ratio_band_warning() {
        let pop = make_quadratic_population(&QuadraticPopulationParams::balanced(6, 3, 1.0, 0.0, 1)).unwrap();
        let server = ServerObjective::for_quadratic_population(&pop, 0.0, None).unwrap();
        let mut cfg = SafariConfig::coupled(0.5, 0.05, 3, 100, 9);
        cfg.ratio_band = Some((10.0, 20.0));
        let run = run_safari(&pop, &ParticipationProcess::Full, Some(&server), &cfg).unwrap();
        assert_eq!(run.warnings.len(), 1);
        cfg.ratio_band = Some((0.0, 1e9));
        let run = run_safari(&pop, &ParticipationProcess::Full, Some(&server), &cfg).unwrap();
        assert!(run.warnings.is_empty());
    }
}
