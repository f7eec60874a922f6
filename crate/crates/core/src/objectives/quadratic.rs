use serde::{Deserialize, Serialize};

use super::{ModelPoint, ObjectiveConstants};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Diagonal Hessian description. Dense Hessians are not supported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianSpec {
    /// `h * I`
    Scalar(f64),
    Diagonal(Vec<f64>),
}

impl HessianSpec {
    pub fn diagonal(&self, dim: usize) -> Result<Vec<f64>> {
        let diag = match self {
            HessianSpec::Scalar(h) => vec![*h; dim],
            HessianSpec::Diagonal(d) => {
                if d.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: d.len(),
                    });
                }
                d.clone()
            }
        };
        if diag.iter().any(|h| !h.is_finite() || *h <= 0.0) {
            return Err(Error::InvalidParameter(
                "Hessian must be positive definite (all diagonal entries > 0)".into(),
            ));
        }
        Ok(diag)
    }
}

/// `F(x) = ½ (x − c)ᵀ H (x − c)` with diagonal `H`, plus i.i.d. Gaussian
/// gradient noise of standard deviation `noise_std` per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    hessian: Vec<f64>,
    center: ModelPoint,
    noise_std: f64,
}

impl QuadraticObjective {
    pub fn new(hessian: &HessianSpec, center: ModelPoint, noise_std: f64) -> Result<Self> {
        if !(noise_std.is_finite() && noise_std >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gradient noise std must be >= 0, got {noise_std}"
            )));
        }
        let hessian = hessian.diagonal(center.dim())?;
        center.ensure_finite("quadratic center")?;
        Ok(Self {
            hessian,
            center,
            noise_std,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn center(&self) -> &ModelPoint {
        &self.center
    }

    pub fn hessian_diag(&self) -> &[f64] {
        &self.hessian
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn with_center(&self, center: ModelPoint) -> Self {
        Self {
            center,
            ..self.clone()
        }
    }

    pub fn with_noise(&self, noise_std: f64) -> Self {
        Self {
            noise_std,
            ..self.clone()
        }
    }

    pub fn loss(&self, x: &ModelPoint) -> Result<f64> {
        x.check_dim(self.dim())?;
        let v: f64 = x
            .as_slice()
            .iter()
            .zip(self.center.as_slice())
            .zip(&self.hessian)
            .map(|((xi, ci), h)| 0.5 * h * (xi - ci) * (xi - ci))
            .sum();
        finite(v, "quadratic loss")
    }

    pub fn exact_gradient(&self, x: &ModelPoint) -> Result<ModelPoint> {
        x.check_dim(self.dim())?;
        let g = ModelPoint::from_raw(
            x.as_slice()
                .iter()
                .zip(self.center.as_slice())
                .zip(&self.hessian)
                .map(|((xi, ci), h)| h * (xi - ci))
                .collect(),
        );
        g.ensure_finite("quadratic gradient")?;
        Ok(g)
    }

    pub fn stochastic_gradient(&self, x: &ModelPoint, rng: &mut Stream) -> Result<ModelPoint> {
        let mut g = self.exact_gradient(x)?;
        if self.noise_std > 0.0 {
            for v in g.as_mut_slice() {
                *v += self.noise_std * rng.normal();
            }
        }
        g.ensure_finite("quadratic stochastic gradient")?;
        Ok(g)
    }

    /// Exact `L = max h`, `μ = min h`, and `σ = √d · noise_std` (the
    /// square root of `E‖g − ∇F‖²`).
    pub fn constants(&self) -> ObjectiveConstants {
        let l = self.hessian.iter().copied().fold(f64::MIN, f64::max);
        let mu = self.hessian.iter().copied().fold(f64::MAX, f64::min);
        ObjectiveConstants {
            lipschitz: Some(l),
            strong_convexity: Some(mu),
            sigma_bound: Some((self.dim() as f64).sqrt() * self.noise_std),
        }
    }
}

fn finite(v: f64, context: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { context })
    }
}
