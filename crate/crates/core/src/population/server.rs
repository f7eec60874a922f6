use super::PopulationSpec;
use crate::error::{Error, Result};
use crate::objectives::{ClientObjective, HessianSpec, ModelPoint, QuadraticObjective};
use crate::rng::Stream;

/// The server's objective built from its auxiliary dataset `T`.
#[derive(Debug, Clone)]
pub struct ServerObjective {
    objective: ClientObjective,
    n_t: Option<usize>,
    shift: Option<ModelPoint>,
}

impl ServerObjective {
    /// Server objective for a quadratic population: the exact population
    /// quadratic `Σ λ_i F_i` (Hessian `Σ λ_i H_i`, center `x*`) displaced by
    /// `shift`, with per-coordinate gradient noise `sigma_s`.
    pub fn for_quadratic_population(
        pop: &PopulationSpec,
        sigma_s: f64,
        shift: Option<ModelPoint>,
    ) -> Result<Self> {
        let optimum = pop.global_optimum().ok_or_else(|| {
            Error::InvalidParameter("population has no analytic optimum".into())
        })?;
        let dim = pop.dim();
        let mut hbar = vec![0.0; dim];
        for c in pop.clients() {
            let q = c.objective.as_quadratic().ok_or_else(|| {
                Error::InvalidParameter("server quadratic needs an all-quadratic population".into())
            })?;
            for (h, qh) in hbar.iter_mut().zip(q.hessian_diag()) {
                *h += c.weight * qh;
            }
        }
        let mut center = optimum.clone();
        if let Some(s) = &shift {
            s.check_dim(dim)?;
            center.axpy(1.0, s);
        }
        let q = QuadraticObjective::new(&HessianSpec::Diagonal(hbar), center, sigma_s)?;
        Ok(Self {
            objective: ClientObjective::Quadratic(q),
            n_t: None,
            shift,
        })
    }

    /// Server objective backed by a dataset of `n_t` samples.
    pub fn from_dataset(objective: ClientObjective, n_t: usize) -> Self {
        Self {
            objective,
            n_t: Some(n_t),
            shift: None,
        }
    }

    pub fn objective(&self) -> &ClientObjective {
        &self.objective
    }

    pub fn n_t(&self) -> Option<usize> {
        self.n_t
    }

    pub fn shift(&self) -> Option<&ModelPoint> {
        self.shift.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn exact_gradient(&self, x: &ModelPoint) -> Result<ModelPoint> {
        self.objective.exact_gradient(x)
    }

    pub fn stochastic_gradient(&self, x: &ModelPoint, rng: &mut Stream) -> Result<ModelPoint> {
        self.objective.stochastic_gradient(x, rng)
    }
}
