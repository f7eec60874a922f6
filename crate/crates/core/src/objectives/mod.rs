//! Client and server loss functions.
//!
//! Three families are provided: diagonal quadratics (closed-form optimum and
//! constants), multinomial logistic regression, and a small fully connected
//! network. [`ClientObjective`] dispatches over them. Objectives are immutable;
//! stochastic calls take an explicit [`Stream`].

mod data;
mod logistic;
mod mlp;
mod point;
mod quadratic;

pub use data::{DataShard, Dataset};
pub use logistic::LogisticObjective;
pub use mlp::{Activation, MlpObjective};
pub use point::ModelPoint;
pub use quadratic::{HessianSpec, QuadraticObjective};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::Stream;

/// Smoothness `L`, strong convexity `μ` and the gradient-noise bound `σ`
/// (so that `E‖g − ∇F‖² ≤ σ²`). `None` means no bound is available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConstants {
    pub lipschitz: Option<f64>,
    pub strong_convexity: Option<f64>,
    pub sigma_bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum ClientObjective {
    Quadratic(QuadraticObjective),
    Logistic(LogisticObjective),
    Mlp(MlpObjective),
}

impl ClientObjective {
    pub fn dim(&self) -> usize {
        match self {
            ClientObjective::Quadratic(q) => q.dim(),
            ClientObjective::Logistic(l) => l.dim(),
            ClientObjective::Mlp(m) => m.dim(),
        }
    }

    pub fn loss(&self, x: &ModelPoint) -> Result<f64> {
        match self {
            ClientObjective::Quadratic(q) => q.loss(x),
            ClientObjective::Logistic(l) => l.loss(x),
            ClientObjective::Mlp(m) => m.loss(x),
        }
    }

    pub fn exact_gradient(&self, x: &ModelPoint) -> Result<ModelPoint> {
        match self {
            ClientObjective::Quadratic(q) => q.exact_gradient(x),
            ClientObjective::Logistic(l) => l.exact_gradient(x),
            ClientObjective::Mlp(m) => m.exact_gradient(x),
        }
    }

    /// `(F_i(x), ∇F_i(x))`, in one pass over the data where possible.
    pub fn loss_and_gradient(&self, x: &ModelPoint) -> Result<(f64, ModelPoint)> {
        match self {
            ClientObjective::Quadratic(q) => Ok((q.loss(x)?, q.exact_gradient(x)?)),
            ClientObjective::Logistic(l) => l.loss_and_gradient(x),
            ClientObjective::Mlp(m) => m.loss_and_gradient(x),
        }
    }

    pub fn stochastic_gradient(&self, x: &ModelPoint, rng: &mut Stream) -> Result<ModelPoint> {
        match self {
            ClientObjective::Quadratic(q) => q.stochastic_gradient(x, rng),
            ClientObjective::Logistic(l) => l.stochastic_gradient(x, rng),
            ClientObjective::Mlp(m) => m.stochastic_gradient(x, rng),
        }
    }

    pub fn constants(&self) -> ObjectiveConstants {
        match self {
            ClientObjective::Quadratic(q) => q.constants(),
            ClientObjective::Logistic(l) => l.constants(),
            ClientObjective::Mlp(m) => m.constants(),
        }
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        match self {
            ClientObjective::Quadratic(q) => Some(q),
            _ => None,
        }
    }
}

pub fn exact_gradient(x: &ModelPoint, obj: &ClientObjective) -> Result<ModelPoint> {
    obj.exact_gradient(x)
}

pub fn stochastic_gradient(x: &ModelPoint, obj: &ClientObjective, rng: &mut Stream) -> Result<ModelPoint> {
    obj.stochastic_gradient(x, rng)
}

pub fn objective_constants(obj: &ClientObjective) -> ObjectiveConstants {
    obj.constants()
}
