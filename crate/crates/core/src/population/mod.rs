//! Client populations, the server-side auxiliary objective, label-skewed data
//! partitioning and client participation processes.

mod participation;
mod partition;
mod quadratic;
mod server;

pub use participation::{sample_participation, ParticipationProcess};
pub use partition::{classes_for_client, label_partition};
pub use quadratic::{
    fedavg_fixed_point, make_quadratic_population, quadratic_population_from_centers,
    QuadraticPopulationParams, Weights,
};
pub use server::ServerObjective;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{ClientObjective, ModelPoint};
use crate::par;

#[derive(Debug, Clone)]
pub struct ClientSpec {
    pub id: usize,
    pub objective: ClientObjective,
    pub weight: f64,
    pub sample_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationConstants {
    pub lipschitz: Option<f64>,
    pub strong_convexity: Option<f64>,
}

/// The `M`-client population with global loss `F(x) = Σ λ_i F_i(x)`.
#[derive(Debug, Clone)]
pub struct PopulationSpec {
    clients: Vec<ClientSpec>,
    global_optimum: Option<ModelPoint>,
    sigma_g: Option<f64>,
    constants: PopulationConstants,
}

const WEIGHT_TOLERANCE: f64 = 1e-9;

impl PopulationSpec {
    /// Builds a population from client specs. Ids must be `0..M` in order,
    /// weights positive and summing to one.
    pub fn new(
        clients: Vec<ClientSpec>,
        global_optimum: Option<ModelPoint>,
        sigma_g: Option<f64>,
    ) -> Result<Self> {
        let first = clients
            .first()
            .ok_or_else(|| Error::InvalidParameter("population needs at least one client".into()))?;
        let dim = first.objective.dim();
        for (i, c) in clients.iter().enumerate() {
            if c.id != i {
                return Err(Error::InvalidParameter(format!(
                    "client ids must be 0..M in order; position {i} has id {}",
                    c.id
                )));
            }
            if c.objective.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: c.objective.dim(),
                });
            }
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "client {i} weight {} outside (0, 1]",
                    c.weight
                )));
            }
        }
        let total: f64 = clients.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "client weights sum to {total}, expected 1"
            )));
        }
        if let Some(x) = &global_optimum {
            x.check_dim(dim)?;
        }
        let per_client: Vec<_> = clients.iter().map(|c| c.objective.constants()).collect();
        let lipschitz = per_client
            .iter()
            .map(|k| k.lipschitz)
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().fold(f64::MIN, f64::max));
        let strong_convexity = per_client
            .iter()
            .map(|k| k.strong_convexity)
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().fold(f64::MAX, f64::min));
        Ok(Self {
            clients,
            global_optimum,
            sigma_g,
            constants: PopulationConstants {
                lipschitz,
                strong_convexity,
            },
        })
    }

    pub fn clients(&self) -> &[ClientSpec] {
        &self.clients
    }

    pub fn client(&self, id: usize) -> &ClientSpec {
        &self.clients[id]
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.clients[0].objective.dim()
    }

    pub fn global_optimum(&self) -> Option<&ModelPoint> {
        self.global_optimum.as_ref()
    }

    pub fn sigma_g(&self) -> Option<f64> {
        self.sigma_g
    }

    pub fn constants(&self) -> PopulationConstants {
        self.constants
    }

    /// `F(x) = Σ λ_i F_i(x)`, summed in client-id order.
    pub fn loss(&self, x: &ModelPoint) -> Result<f64> {
        let parts = par::try_map_indices(self.len(), |i| self.clients[i].objective.loss(x))?;
        Ok(parts
            .iter()
            .zip(&self.clients)
            .map(|(v, c)| c.weight * v)
            .sum())
    }

    /// `∇F(x) = Σ λ_i ∇F_i(x)`, summed in client-id order.
    pub fn exact_gradient(&self, x: &ModelPoint) -> Result<ModelPoint> {
        x.check_dim(self.dim())?;
        let grads = par::try_map_indices(self.len(), |i| self.clients[i].objective.exact_gradient(x))?;
        let mut total = ModelPoint::zeros(self.dim());
        for (g, c) in grads.iter().zip(&self.clients) {
            total.axpy(c.weight, g);
        }
        total.ensure_finite("population gradient")?;
        Ok(total)
    }

    /// `(F(x), ∇F(x))` with one pass over each client's data.
    pub fn loss_and_gradient(&self, x: &ModelPoint) -> Result<(f64, ModelPoint)> {
        x.check_dim(self.dim())?;
        let parts = par::try_map_indices(self.len(), |i| self.clients[i].objective.loss_and_gradient(x))?;
        let mut loss = 0.0;
        let mut total = ModelPoint::zeros(self.dim());
        for ((l, g), c) in parts.iter().zip(&self.clients) {
            loss += c.weight * l;
            total.axpy(c.weight, g);
        }
        total.ensure_finite("population gradient")?;
        Ok((loss, total))
    }

    /// The common diagonal Hessian when every client is a quadratic with the
    /// same curvature.
    pub fn common_hessian(&self) -> Option<&[f64]> {
        let first = self.clients[0].objective.as_quadratic()?.hessian_diag();
        self.clients
            .iter()
            .all(|c| c.objective.as_quadratic().is_some_and(|q| q.hessian_diag() == first))
            .then_some(first)
    }
}
