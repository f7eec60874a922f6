use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model parameter vector. Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelPoint(Vec<f64>);

impl ModelPoint {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let p = Self(values);
        p.ensure_finite("model point construction")?;
        Ok(p)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Wraps values produced by internal arithmetic. Callers validate with
    /// [`ModelPoint::ensure_finite`] at the boundary where it matters.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { context })
        }
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                actual: self.dim(),
            })
        }
    }

    /// `self += alpha * other`
    #[inline]
    pub fn axpy(&mut self, alpha: f64, other: &ModelPoint) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn sub(&self, other: &ModelPoint) -> ModelPoint {
        ModelPoint(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scaled(&self, factor: f64) -> ModelPoint {
        ModelPoint(self.0.iter().map(|a| a * factor).collect())
    }

    pub fn dot(&self, other: &ModelPoint) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &ModelPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl From<ModelPoint> for Vec<f64> {
    fn from(p: ModelPoint) -> Self {
        p.0
    }
}
