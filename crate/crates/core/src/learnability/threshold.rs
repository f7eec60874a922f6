use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{Purpose, Stream};
use crate::stats::{fit_loglog_slope, mean, LogLogFit};

/// Threshold class `h_t(x) = 1{x ≥ t}` with target `P = U[a, b]`, client
/// distribution `D = U[a′, b′]` and training mixture `Q = λ₁D + λ₂P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInstance {
    pub a: f64,
    pub b: f64,
    pub a_d: f64,
    pub b_d: f64,
    pub t_star: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

fn uniform_cdf(lo: f64, hi: f64, x: f64) -> f64 {
    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
}

impl ThresholdInstance {
    /// Mixture weights derived from the sample counts `n_S` (from `D`) and
    /// `n_T` (from `P`).
    pub fn with_counts(a: f64, b: f64, a_d: f64, b_d: f64, t_star: f64, n_s: usize, n_t: usize) -> Result<Self> {
        let total = (n_s + n_t) as f64;
        if total == 0.0 {
            return Err(Error::InvalidParameter("n_S + n_T must be positive".into()));
        }
        let inst = Self { a, b, a_d, b_d, t_star, lambda1: n_s as f64 / total, lambda2: n_t as f64 / total };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = self.a <= self.a_d && self.a_d < self.b_d && self.b_d <= self.b && self.a < self.b;
        if !ordered || ![self.a, self.b, self.a_d, self.b_d].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need a <= a' < b' <= b, got [{}, {}] and [{}, {}]",
                self.a, self.b, self.a_d, self.b_d
            )));
        }
        if !(self.t_star >= self.a && self.t_star <= self.b) {
            return Err(Error::InvalidParameter(format!("t* = {} outside [a, b]", self.t_star)));
        }
        let w_ok = self.lambda1 >= 0.0 && self.lambda2 >= 0.0 && (self.lambda1 + self.lambda2 - 1.0).abs() < 1e-12;
        if !w_ok {
            return Err(Error::InvalidParameter(format!(
                "mixture weights must be >= 0 and sum to 1, got {} and {}",
                self.lambda1, self.lambda2
            )));
        }
        Ok(())
    }

    pub fn cdf_p(&self, x: f64) -> f64 {
        uniform_cdf(self.a, self.b, x)
    }

    pub fn cdf_d(&self, x: f64) -> f64 {
        uniform_cdf(self.a_d, self.b_d, x)
    }

    pub fn cdf_q(&self, x: f64) -> f64 {
        self.lambda1 * self.cdf_d(x) + self.lambda2 * self.cdf_p(x)
    }

    /// `ε_P(h_t)`: `P`-mass between `t` and `t*`.
    pub fn excess_p(&self, t: f64) -> f64 {
        (self.cdf_p(t) - self.cdf_p(self.t_star)).abs()
    }

    pub fn excess_d(&self, t: f64) -> f64 {
        (self.cdf_d(t) - self.cdf_d(self.t_star)).abs()
    }

    pub fn excess_q(&self, t: f64) -> f64 {
        (self.cdf_q(t) - self.cdf_q(self.t_star)).abs()
    }

    pub fn label(&self, x: f64) -> bool {
        x >= self.t_star
    }
}

/// Draws `round(λ₂ n)` points from `P` and the rest from `D`, labelled by
/// `t*`.
pub fn sample_mixture(inst: &ThresholdInstance, n: usize, rng: &mut Stream) -> Vec<(f64, bool)> {
    let from_p = ((inst.lambda2 * n as f64).round() as usize).min(n);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = if i < from_p {
            rng.uniform_in(inst.a, inst.b)
        } else {
            rng.uniform_in(inst.a_d, inst.b_d)
        };
        out.push((x, inst.label(x)));
    }
    out
}

/// Threshold minimising the empirical zero-one error of `1{x ≥ t}`.
///
/// On separable data this is the midpoint of the version space between the
/// largest negative and the smallest positive. With only positives the
/// smallest sample is returned; with only negatives the next float above the
/// largest sample. Non-separable data falls back to a sorted scan over
/// midpoints, choosing the first minimiser.
pub fn erm_threshold(samples: &[(f64, bool)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("erm_threshold needs at least one sample".into()));
    }
    if let Some((x, _)) = samples.iter().find(|(x, _)| !x.is_finite()) {
        return Err(Error::NonFinite { context: if x.is_nan() { "sample is NaN" } else { "sample is infinite" } });
    }
    let max_neg = samples.iter().filter(|s| !s.1).map(|s| s.0).reduce(f64::max);
    let min_pos = samples.iter().filter(|s| s.1).map(|s| s.0).reduce(f64::min);
    match (max_neg, min_pos) {
        (None, Some(lo)) => return Ok(lo),
        (Some(hi), None) => return Ok(hi.next_up()),
        (Some(neg), Some(pos)) if neg < pos => return Ok(neg + (pos - neg) / 2.0),
        _ => {}
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|l, r| l.0.total_cmp(&r.0));
    // threshold below every sample: all predicted positive
    let mut errors = sorted.iter().filter(|s| !s.1).count();
    let mut best = (errors, sorted[0].0);
    for i in 0..sorted.len() {
        // moving the threshold past sorted[i] predicts it negative
        errors = if sorted[i].1 { errors + 1 } else { errors - 1 };
        let boundary = i + 1 == sorted.len() || sorted[i + 1].0 > sorted[i].0;
        if boundary && errors < best.0 {
            let t = match sorted.get(i + 1) {
                Some(next) => sorted[i].0 + (next.0 - sorted[i].0) / 2.0,
                None => sorted[i].0.next_up(),
            };
            best = (errors, t);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacRateResult {
    pub n_grid: Vec<usize>,
    /// Mean analytic `ε_P(ĥ)` per grid point.
    pub mean_excess: Vec<f64>,
    /// Grid points entering the fit (the first is dropped when its mean
    /// excess exceeds 0.2).
    pub fit_from: usize,
    pub fit: LogLogFit,
}

fn mean_excess_at(inst: &ThresholdInstance, n: usize, trials: usize, seed: u64, cell: u64) -> Result<f64> {
    let errs = par::try_map_indices(trials, |t| {
        let mut rng = Stream::new(seed, Purpose::Trial, t as u64, cell);
        erm_threshold(&sample_mixture(inst, n, &mut rng)).map(|th| inst.excess_p(th))
    })?;
    Ok(mean(&errs))
}

/// Mean `ε_P` of the ERM threshold trained on `n` mixture samples for each `n`
/// in the grid, with a log-log slope fit.
pub fn pac_rate_experiment(inst: &ThresholdInstance, n_grid: &[usize], trials: usize, seed: u64) -> Result<PacRateResult> {
    inst.validate()?;
    if n_grid.len() < 3 || n_grid.iter().any(|&n| n == 0) {
        return Err(Error::InvalidParameter("n_grid needs at least 3 positive sizes".into()));
    }
    let mean_excess = n_grid
        .iter()
        .enumerate()
        .map(|(cell, &n)| mean_excess_at(inst, n, trials, seed, cell as u64))
        .collect::<Result<Vec<f64>>>()?;
    let fit_from = usize::from(mean_excess[0] > 0.2 && n_grid.len() > 3);
    let xs: Vec<f64> = n_grid[fit_from..].iter().map(|&n| n as f64).collect();
    let fit = fit_loglog_slope(&xs, &mean_excess[fit_from..])?;
    Ok(PacRateResult { n_grid: n_grid.to_vec(), mean_excess, fit_from, fit })
}

/// Mean `ε_P` of ERM trained on `n_T` samples from `P` alone.
pub fn centralized_baseline(inst: &ThresholdInstance, n_t: usize, trials: usize, seed: u64) -> Result<f64> {
    inst.validate()?;
    if n_t == 0 || trials == 0 {
        return Err(Error::InvalidParameter("n_T and trials must be >= 1".into()));
    }
    let pure_p = ThresholdInstance { lambda1: 0.0, lambda2: 1.0, ..*inst };
    mean_excess_at(&pure_p, n_t, trials, seed, u64::MAX)
}

/// Fitted `(α, β)` in `|ε_P − ε_Q| = α ε_Q^β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivelyRelatedFit {
    pub alpha: f64,
    /// `None` when `ε_P = ε_Q` on the whole grid.
    pub beta: Option<f64>,
    pub r_squared: Option<f64>,
}

/// Evaluates `|ε_P(h_t) − ε_Q(h_t)|` and `ε_Q(h_t)` analytically on `t_grid`
/// and fits a log-log line. Grid points with `t = t*` carry no information and
/// are skipped.
pub fn check_positively_related(inst: &ThresholdInstance, t_grid: &[f64]) -> Result<PositivelyRelatedFit> {
    inst.validate()?;
    if !(inst.t_star >= inst.a_d && inst.t_star <= inst.b_d) {
        return Err(Error::InvalidParameter(format!(
            "t* = {} outside [a', b'] = [{}, {}]",
            inst.t_star, inst.a_d, inst.b_d
        )));
    }
    if let Some(t) = t_grid.iter().find(|t| !(**t >= inst.a_d && **t <= inst.b_d)) {
        return Err(Error::InvalidParameter(format!("grid point {t} outside [a', b']")));
    }
    let pairs: Vec<(f64, f64)> = t_grid
        .iter()
        .map(|&t| (inst.excess_q(t), (inst.excess_p(t) - inst.excess_q(t)).abs()))
        .filter(|(eq, _)| *eq > 0.0)
        .collect();
    if pairs.len() < 3 {
        return Err(Error::InvalidParameter("need at least 3 grid points away from t*".into()));
    }
    let scale = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    if pairs.iter().all(|(_, diff)| *diff <= 1e-15 * scale) {
        return Ok(PositivelyRelatedFit { alpha: 0.0, beta: None, r_squared: None });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let fit = fit_loglog_slope(&xs, &ys)?;
    Ok(PositivelyRelatedFit { alpha: 10f64.powf(fit.intercept), beta: Some(fit.slope), r_squared: Some(fit.r_squared) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(t_star: f64) -> ThresholdInstance {
        ThresholdInstance { a: 0.0, b: 1.0, a_d: 0.0, b_d: 1.0, t_star, lambda1: 0.0, lambda2: 1.0 }
    }

    #[test]
    fn erm_midpoint_and_boundaries() {
        assert_eq!(erm_threshold(&[(0.2, false), (0.8, true)]).unwrap(), 0.5);
        assert_eq!(erm_threshold(&[(0.3, true), (0.9, true), (0.5, true)]).unwrap(), 0.3);
        let t = erm_threshold(&[(0.3, false), (0.1, false)]).unwrap();
        assert!(t > 0.3 && t == 0.3f64.next_up());
        assert!(erm_threshold(&[]).is_err());
    }

    #[test]
    fn erm_noisy_scan_minimises_errors() {
        let s = [(0.1, false), (0.2, true), (0.3, false), (0.4, true), (0.5, true), (0.6, true)];
        let t = erm_threshold(&s).unwrap();
        let err = s.iter().filter(|(x, y)| (*x >= t) != *y).count();
        assert_eq!(err, 1);
        // the gaps (0.1, 0.2) and (0.3, 0.4) both give one error; the first wins
        assert!(t > 0.1 && t < 0.2);
    }

    #[test]
    fn excess_is_mass_between_thresholds() {
        let inst = ThresholdInstance { a: 0.0, b: 2.0, ..unit(0.5) };
        assert!((inst.excess_p(1.5) - 0.5).abs() < 1e-15);
        assert!((inst.excess_p(-3.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mixture_counts_and_support() {
        let inst = ThresholdInstance { a_d: 0.4, b_d: 0.6, lambda1: 0.75, lambda2: 0.25, ..unit(0.5) };
        let s = sample_mixture(&inst, 1000, &mut Stream::new(1, Purpose::Data, 0, 0));
        assert_eq!(s.len(), 1000);
        assert!(s.iter().all(|(x, y)| (0.0..=1.0).contains(x) && *y == (*x >= 0.5)));
        assert!(s[250..].iter().all(|(x, _)| (0.4..=0.6).contains(x)));
    }

    #[test]
    fn positively_related_pure_client_distribution() {
        let inst = ThresholdInstance { a_d: 0.25, b_d: 0.75, lambda1: 1.0, lambda2: 0.0, ..unit(0.5) };
        let grid: Vec<f64> = (0..=20).map(|i| 0.25 + 0.025 * i as f64).collect();
        let fit = check_positively_related(&inst, &grid).unwrap();
        assert!((fit.alpha - 0.5).abs() < 1e-9);
        assert!((fit.beta.unwrap() - 1.0).abs() < 1e-9);
        let same = check_positively_related(&unit(0.5), &grid).unwrap();
        assert_eq!(same.alpha, 0.0);
        assert!(check_positively_related(&ThresholdInstance { t_star: 0.9, ..inst }, &grid).is_err());
    }
}
