use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::ModelPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafariConfig {
    /// Probability that a round is a client round.
    pub q: f64,
    pub eta_c: f64,
    pub eta_s: f64,
    /// Local SGD steps per client round (`K`).
    pub local_steps: usize,
    pub rounds: usize,
    /// When set, `eta_c` is derived as `2 η_s / K`.
    pub couple_steps: bool,
    pub seed: u64,
    /// Starting point; zero vector when `None`.
    pub x0: Option<ModelPoint>,
    /// Track inner-iterate gradients for `G2` and client losses for `G4`.
    pub track_diagnostics: bool,
    /// Admissible band for the realised `R_s / R_c`; a warning is emitted
    /// when the run leaves it.
    pub ratio_band: Option<(f64, f64)>,
}

impl SafariConfig {
    /// Configuration with `η_c = 2 η_s / K`.
    pub fn coupled(q: f64, eta_s: f64, local_steps: usize, rounds: usize, seed: u64) -> Self {
        Self {
            q,
            eta_c: 2.0 * eta_s / local_steps.max(1) as f64,
            eta_s,
            local_steps,
            rounds,
            couple_steps: true,
            seed,
            x0: None,
            track_diagnostics: true,
            ratio_band: None,
        }
    }

    pub fn uncoupled(q: f64, eta_c: f64, eta_s: f64, local_steps: usize, rounds: usize, seed: u64) -> Self {
        Self {
            q,
            eta_c,
            eta_s,
            local_steps,
            rounds,
            couple_steps: false,
            seed,
            x0: None,
            track_diagnostics: true,
            ratio_band: None,
        }
    }

    pub fn with_x0(mut self, x0: ModelPoint) -> Self {
        self.x0 = Some(x0);
        self
    }

    /// Client step size actually used.
    pub fn client_step(&self) -> f64 {
        if self.couple_steps {
            2.0 * self.eta_s / self.local_steps as f64
        } else {
            self.eta_c
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::InvalidParameter(format!("q must lie in [0, 1], got {}", self.q)));
        }
        if self.local_steps == 0 {
            return Err(Error::InvalidParameter("local steps K must be >= 1".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("rounds R must be >= 1".into()));
        }
        for (name, v) in [("eta_c", self.client_step()), ("eta_s", self.eta_s)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if let Some((lo, hi)) = self.ratio_band {
            if !(lo <= hi) {
                return Err(Error::InvalidParameter(format!("ratio band [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_holds_to_machine_precision() {
        for &(eta_s, k) in &[(0.1, 5usize), (0.37, 3), (1e-3, 64)] {
            let cfg = SafariConfig::coupled(0.5, eta_s, k, 10, 0);
            let expected = 2.0 * eta_s / k as f64;
            assert!(((cfg.client_step() - expected) / expected).abs() <= 1e-15);
            assert!(((cfg.eta_c - expected) / expected).abs() <= 1e-15);
        }
    }

    #[test]
    fn rejects_bad_q_and_zero_steps() {
        assert!(SafariConfig::coupled(1.5, 0.1, 5, 10, 0).validate().is_err());
        assert!(SafariConfig::coupled(0.5, 0.1, 0, 10, 0).validate().is_err());
        assert!(SafariConfig::coupled(0.5, 0.1, 5, 0, 0).validate().is_err());
        assert!(SafariConfig::coupled(0.5, 0.1, 5, 10, 0).validate().is_ok());
    }
}
