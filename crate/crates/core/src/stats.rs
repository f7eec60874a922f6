//! Small statistics helpers shared by the Monte-Carlo experiments and the
//! harness reducers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Binomial proportion with its Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: usize,
    pub trials: usize,
    pub fraction: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Proportion {
    pub fn new(successes: usize, trials: usize) -> Self {
        let (lower, upper) = wilson_interval(successes, trials, Z_95);
        Self {
            successes,
            trials,
            fraction: if trials == 0 { f64::NAN } else { successes as f64 / trials as f64 },
            lower,
            upper,
        }
    }
}

/// Ordinary least squares fit of `log10 y = intercept + slope · log10 x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fits a line to `(log10 x, log10 y)`. Needs at least three strictly
/// positive pairs. A constant `y` gives slope 0 and `r² = 0`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), actual: ys.len() });
    }
    if xs.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 points, got {}", xs.len())));
    }
    if let Some((x, y)) = xs.iter().zip(ys).find(|(x, y)| !(**x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidParameter(format!("log-log fit needs positive finite values, got ({x}, {y})")));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.log10()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("log-log fit needs at least two distinct x".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 0.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LogLogFit { slope, intercept, r_squared })
}

/// One-sided sign-test p-value `P[Bin(n, ½) ≥ wins]`.
pub fn sign_test_p_value(wins: usize, n: usize) -> f64 {
    if wins > n {
        return 0.0;
    }
    // log-space binomial coefficients keep this exact enough for n in the thousands
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let mut ln_choose = 0.0;
    let mut total = 0.0;
    for k in 0..=n {
        if k > 0 {
            ln_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= wins {
            total += (ln_choose + ln_half_n).exp();
        }
    }
    total.min(1.0)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
