use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of evaluating an admissible-`q` formula on realised statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum QBound {
    /// `1 / (frac + 1)` with `frac > 0`.
    Bounded(f64),
    /// The fraction is `≤ 0`: every `q ∈ (0, 1]` is admissible.
    Vacuous,
    /// The formula cannot be evaluated (zero or negative denominator).
    Undefined(String),
}

impl QBound {
    fn from_fraction(frac: f64) -> Self {
        if frac.is_nan() {
            QBound::Undefined("fraction is NaN".into())
        } else if frac <= 0.0 {
            QBound::Vacuous
        } else {
            QBound::Bounded((1.0 / (frac + 1.0)).clamp(f64::MIN_POSITIVE, 1.0))
        }
    }

    /// Clamped value `min(1, max(bound, 0⁺))`; `None` when undefined.
    pub fn q_max(&self) -> Option<f64> {
        match self {
            QBound::Bounded(q) => Some(*q),
            QBound::Vacuous => Some(1.0),
            QBound::Undefined(_) => None,
        }
    }

    pub fn is_vacuous(&self) -> bool {
        matches!(self, QBound::Vacuous)
    }
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_nan() || v < 0.0 {
        return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
    }
    Ok(())
}

/// Nonconvex admissible-`q` fraction
/// `(4σ_G² − 4 G2 (1/(2K²) − 2Lη_s²/K²)) / ((1 − Lη_s) G1)`.
pub fn q_fraction_nonconvex(sigma_g_sq: f64, g1: f64, g2: f64, k: usize, l: f64, eta_s: f64) -> Result<Option<f64>> {
    nonneg("sigma_g^2", sigma_g_sq)?;
    nonneg("G1", g1)?;
    nonneg("G2", g2)?;
    if k == 0 {
        return Err(Error::InvalidParameter("K must be >= 1".into()));
    }
    let k2 = (k * k) as f64;
    let numer = 4.0 * sigma_g_sq - 4.0 * g2 * (1.0 / (2.0 * k2) - 2.0 * l * eta_s * eta_s / k2);
    let denom = (1.0 - l * eta_s) * g1;
    if denom <= 0.0 {
        return Ok(None);
    }
    Ok(Some(numer / denom))
}

/// Admissible `q` for the nonconvex case.
///
/// Requires `Lη_s < 1`; otherwise, or when `G1 = 0` with a positive numerator,
/// the bound is reported as undefined.
pub fn q_bound_nonconvex(sigma_g_sq: f64, g1: f64, g2: f64, k: usize, l: f64, eta_s: f64) -> Result<QBound> {
    if l * eta_s >= 1.0 {
        return Ok(QBound::Undefined("requires L * eta_s < 1".into()));
    }
    match q_fraction_nonconvex(sigma_g_sq, g1, g2, k, l, eta_s)? {
        Some(frac) => Ok(QBound::from_fraction(frac)),
        None => {
            let k2 = (k * k) as f64;
            let numer = 4.0 * sigma_g_sq - 4.0 * g2 * (1.0 / (2.0 * k2) - 2.0 * l * eta_s * eta_s / k2);
            if numer <= 0.0 {
                Ok(QBound::Vacuous)
            } else {
                Ok(QBound::Undefined("G1 = 0 with positive numerator".into()))
            }
        }
    }
}

/// `η̄ = η_c K μ / 2`.
pub fn eta_bar(eta_c: f64, k: usize, mu: f64) -> f64 {
    eta_c * k as f64 * mu / 2.0
}

/// Strongly convex admissible-`q` fraction
///
/// `[(4η̄/μ²)(1 + (30Lη̄/μ)(1 + 2Lη̄/μ)) G3 − (4/μ) G4]
///  / [(1/(L+μ) − (L+μ)² η̄ / (4L²μ²)) G3]`.
pub fn q_fraction_strongly_convex(g3: f64, g4: f64, l: f64, mu: f64, eta_bar: f64) -> Result<Option<f64>> {
    nonneg("G3", g3)?;
    if !(l > 0.0 && mu > 0.0 && mu <= l) {
        return Err(Error::InvalidParameter(format!("need 0 < mu <= L, got L={l}, mu={mu}")));
    }
    nonneg("eta_bar", eta_bar)?;
    let r = l * eta_bar / mu;
    let numer = (4.0 * eta_bar / (mu * mu)) * (1.0 + 30.0 * r * (1.0 + 2.0 * r)) * g3 - (4.0 / mu) * g4;
    let denom = (1.0 / (l + mu) - (l + mu).powi(2) * eta_bar / (4.0 * l * l * mu * mu)) * g3;
    if denom <= 0.0 {
        return Ok(None);
    }
    Ok(Some(numer / denom))
}

/// Admissible `q` for the strongly convex case. `η̄` must correspond to
/// `η_s ≤ 2/(L+μ)`, i.e. `η̄ ≤ 4Lμ/(L+μ)²`.
pub fn q_bound_strongly_convex(g3: f64, g4: f64, l: f64, mu: f64, eta_bar: f64) -> Result<QBound> {
    if g3 == 0.0 {
        return Ok(QBound::Undefined("G3 = 0".into()));
    }
    let eta_bar_max = 4.0 * l * mu / (l + mu).powi(2);
    if eta_bar > eta_bar_max * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "eta_bar = {eta_bar} exceeds 4L mu/(L+mu)^2 = {eta_bar_max} (eta_s > 2/(L+mu))"
        )));
    }
    match q_fraction_strongly_convex(g3, g4, l, mu, eta_bar)? {
        Some(frac) => Ok(QBound::from_fraction(frac)),
        None => Ok(QBound::Undefined("non-positive denominator".into())),
    }
}

/// Admissible band for the realised `R_s/R_c`:
/// `[frac, c/(mK) / (1 − c/(mK))]`, where `frac` is the nonconvex fraction and
/// `c` the user constant of the upper end. Returns `None` when the band is
/// empty or undefined.
pub fn admissible_ratio_band(frac_nonconvex: f64, c: f64, m: usize, k: usize) -> Option<(f64, f64)> {
    let t = c / (m * k) as f64;
    if !(t > 0.0 && t < 1.0) || frac_nonconvex.is_nan() {
        return None;
    }
    let hi = t / (1.0 - t);
    let lo = frac_nonconvex.max(0.0);
    (lo <= hi).then_some((lo, hi))
}
