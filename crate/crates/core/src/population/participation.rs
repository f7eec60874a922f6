use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// How each round's participating client set is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParticipationProcess {
    /// Every client, every round.
    Full,
    /// `m` distinct clients uniformly at random.
    Uniform { m: usize },
    /// Clients with id `≥ M − s` never participate; `m` are drawn uniformly
    /// from the remaining `M − s`.
    Excluded { s: usize, m: usize },
    /// Deterministic worst-case selector: always the `m` lowest ids.
    Adversarial { m: usize },
}

impl ParticipationProcess {
    /// Participants per round for a population of `clients`.
    pub fn sampled(&self, clients: usize) -> usize {
        match *self {
            ParticipationProcess::Full => clients,
            ParticipationProcess::Uniform { m }
            | ParticipationProcess::Excluded { m, .. }
            | ParticipationProcess::Adversarial { m } => m,
        }
    }

    pub fn excluded_count(&self) -> usize {
        match *self {
            ParticipationProcess::Excluded { s, .. } => s,
            _ => 0,
        }
    }

    /// System capacity `ω = m / M`.
    pub fn capacity(&self, clients: usize) -> f64 {
        self.sampled(clients) as f64 / clients as f64
    }

    /// Ids that can ever be selected.
    pub fn eligible(&self, clients: usize) -> Vec<usize> {
        match *self {
            ParticipationProcess::Excluded { s, .. } => (0..clients.saturating_sub(s)).collect(),
            ParticipationProcess::Adversarial { m } => (0..m.min(clients)).collect(),
            _ => (0..clients).collect(),
        }
    }

    pub fn validate(&self, clients: usize) -> Result<()> {
        if clients == 0 {
            return Err(Error::Infeasible("population has no clients".into()));
        }
        match *self {
            ParticipationProcess::Full => Ok(()),
            ParticipationProcess::Uniform { m } | ParticipationProcess::Adversarial { m } => {
                if m == 0 || m > clients {
                    Err(Error::Infeasible(format!("need 1 <= m <= M, got m={m}, M={clients}")))
                } else {
                    Ok(())
                }
            }
            ParticipationProcess::Excluded { s, m } => {
                if m == 0 || s >= clients || m > clients - s {
                    Err(Error::Infeasible(format!(
                        "need 1 <= m <= M - s, got m={m}, s={s}, M={clients}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Draws one round's participating set, sorted ascending. `rng` should be the
/// round's participation stream so that `(process, seed, round)` fixes the set.
pub fn sample_participation(
    process: &ParticipationProcess,
    clients: usize,
    rng: &mut Stream,
) -> Result<Vec<usize>> {
    process.validate(clients)?;
    Ok(match *process {
        ParticipationProcess::Full => (0..clients).collect(),
        ParticipationProcess::Uniform { m } => rng.subset(clients, m),
        ParticipationProcess::Excluded { s, m } => rng.subset(clients - s, m),
        ParticipationProcess::Adversarial { m } => (0..m).collect(),
    })
}
