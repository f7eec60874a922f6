use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{Purpose, Stream};
use crate::stats::Proportion;

/// The two input points of the construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Point {
    /// The common point, on which both hypotheses agree.
    X1,
    /// The rare point, mass `4ε`.
    X2,
}

/// A training sample: input point plus label under the chosen target.
pub type Sample = (Point, bool);

/// Two-point instance: `M` clients with `n` samples each, of which a budget of
/// `ωMn` reaches the learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpossibilityInstance {
    pub clients: usize,
    pub samples_per_client: usize,
    pub omega: f64,
    /// `(1 − ω) / 8`.
    pub epsilon: f64,
    /// Samples passed to the learner; `round(ωMn)` unless overridden.
    pub budget: usize,
    pub trials: usize,
}

impl ImpossibilityInstance {
    pub fn new(clients: usize, samples_per_client: usize, omega: f64, trials: usize) -> Result<Self> {
        if !(omega > 0.0 && omega < 1.0) {
            return Err(Error::InvalidParameter(format!("omega must lie in (0, 1), got {omega}")));
        }
        if clients == 0 || samples_per_client == 0 || trials == 0 {
            return Err(Error::InvalidParameter("clients, samples and trials must be >= 1".into()));
        }
        let total = clients * samples_per_client;
        Ok(Self {
            clients,
            samples_per_client,
            omega,
            epsilon: (1.0 - omega) / 8.0,
            budget: ((omega * total as f64).round() as usize).min(total),
            trials,
        })
    }

    /// Every sample reaches the learner, with `ε` held fixed. The nominal `ω`
    /// is set to `1 − 8ε` so that the failure threshold stays `ε`.
    pub fn full_participation(clients: usize, samples_per_client: usize, epsilon: f64, trials: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.125) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1/8), got {epsilon}")));
        }
        let mut inst = Self::new(clients, samples_per_client, 1.0 - 8.0 * epsilon, trials)?;
        inst.epsilon = epsilon;
        inst.budget = clients * samples_per_client;
        Ok(inst)
    }

    pub fn total_samples(&self) -> usize {
        self.clients * self.samples_per_client
    }

    /// `P(x2) = 4ε`.
    pub fn rare_mass(&self) -> f64 {
        4.0 * self.epsilon
    }

    /// Risk above which a trial counts as a failure, `(1 − ω)/8 = ε`.
    pub fn failure_threshold(&self) -> f64 {
        self.epsilon
    }
}

/// Keeps as many `x1` samples as the budget allows and fills the rest with
/// `x2` samples, in input order.
pub fn adversarial_select(samples: &[Sample], budget: usize) -> Vec<Sample> {
    let budget = budget.min(samples.len());
    let mut out: Vec<Sample> = samples.iter().copied().filter(|s| s.0 == Point::X1).take(budget).collect();
    let fill = budget - out.len();
    out.extend(samples.iter().copied().filter(|s| s.0 == Point::X2).take(fill));
    out
}

/// `f1` and `f2` both label `x1` positive; `f1(x2) = 0`, `f2(x2) = 1`.
fn label(hypothesis: usize, p: Point) -> bool {
    match p {
        Point::X1 => true,
        Point::X2 => hypothesis == 2,
    }
}

/// Empirical risk minimiser over `{f1, f2}`; ties go to `f1`.
fn two_hypothesis_erm(train: &[Sample]) -> usize {
    let errors = |h: usize| train.iter().filter(|(p, y)| label(h, *p) != *y).count();
    if errors(2) < errors(1) {
        2
    } else {
        1
    }
}

/// Result of one Monte-Carlo trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Worst-case `P`-risk over the two targets.
    pub risk: f64,
    /// Number of `x2` draws among all `Mn` samples.
    pub rare_count: usize,
}

/// Draws `Mn` points, applies the adversarial selector and returns the
/// learner's `P`-risk against the worse of the two targets.
pub fn impossibility_trial(inst: &ImpossibilityInstance, rng: &mut Stream) -> TrialOutcome {
    let p2 = inst.rare_mass();
    let points: Vec<Point> = (0..inst.total_samples())
        .map(|_| if rng.bernoulli(p2) { Point::X2 } else { Point::X1 })
        .collect();
    let rare_count = points.iter().filter(|p| **p == Point::X2).count();
    let risk = [1usize, 2]
        .into_iter()
        .map(|target| {
            let labelled: Vec<Sample> = points.iter().map(|&p| (p, label(target, p))).collect();
            let learned = two_hypothesis_erm(&adversarial_select(&labelled, inst.budget));
            if learned == target {
                0.0
            } else {
                p2
            }
        })
        .fold(0.0, f64::max);
    TrialOutcome { risk, rare_count }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpossibilityReport {
    pub instance: ImpossibilityInstance,
    pub seed: u64,
    /// Trials with risk `> (1 − ω)/8`.
    pub failure: Proportion,
    pub mean_risk: f64,
    /// Trials with `#x2 ≥ (1 − ω)Mn`.
    pub rare_excess: Proportion,
}

/// Runs `inst.trials` independent trials; trial `t` draws from stream
/// `(seed, trial, t)`.
pub fn impossibility_failure_rate(inst: &ImpossibilityInstance, seed: u64) -> Result<ImpossibilityReport> {
    if inst.trials < 1000 {
        return Err(Error::InvalidParameter(format!("need at least 1000 trials, got {}", inst.trials)));
    }
    let outcomes = par::map_indices(inst.trials, |t| {
        impossibility_trial(inst, &mut Stream::new(seed, Purpose::Trial, t as u64, 0))
    });
    let threshold = inst.failure_threshold();
    let rare_cut = (1.0 - inst.omega) * inst.total_samples() as f64;
    let failures = outcomes.iter().filter(|o| o.risk > threshold).count();
    let excess = outcomes.iter().filter(|o| o.rare_count as f64 >= rare_cut).count();
    Ok(ImpossibilityReport {
        instance: *inst,
        seed,
        failure: Proportion::new(failures, inst.trials),
        mean_risk: outcomes.iter().map(|o| o.risk).sum::<f64>() / inst.trials as f64,
        rare_excess: Proportion::new(excess, inst.trials),
    })
}
