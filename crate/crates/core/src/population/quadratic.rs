use serde::{Deserialize, Serialize};

use super::{ClientSpec, PopulationSpec};
use crate::error::{Error, Result};
use crate::objectives::{ClientObjective, HessianSpec, ModelPoint, QuadraticObjective};
use crate::rng::{Purpose, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weights {
    Balanced,
    Explicit(Vec<f64>),
}

impl Weights {
    pub fn resolve(&self, clients: usize) -> Result<Vec<f64>> {
        match self {
            Weights::Balanced => Ok(vec![1.0 / clients as f64; clients]),
            Weights::Explicit(w) if w.len() == clients => Ok(w.clone()),
            Weights::Explicit(w) => Err(Error::DimensionMismatch {
                expected: clients,
                actual: w.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPopulationParams {
    pub clients: usize,
    pub dim: usize,
    pub spread: f64,
    pub hessian: HessianSpec,
    /// Per-coordinate gradient noise std, shared by all clients.
    pub sigma: f64,
    /// Optional per-client override of `sigma`.
    pub client_sigmas: Option<Vec<f64>>,
    pub weights: Weights,
    /// Common point `c̄` the centers are spread around; zero when `None`.
    pub center: Option<ModelPoint>,
    pub seed: u64,
}

impl QuadraticPopulationParams {
    pub fn balanced(clients: usize, dim: usize, spread: f64, sigma: f64, seed: u64) -> Self {
        Self {
            clients,
            dim,
            spread,
            hessian: HessianSpec::Scalar(1.0),
            sigma,
            client_sigmas: None,
            weights: Weights::Balanced,
            center: None,
            seed,
        }
    }
}

/// Synthesises a quadratic population with controlled heterogeneity.
///
/// Centers are `c_i = c̄ + spread · u_i`. The directions `u_i` come from a
/// Halton sequence with a seeded Cranley–Patterson shift, mapped to the unit
/// sphere, re-centred so that `Σ λ_i u_i = 0`, then rescaled so the largest
/// has unit norm. With a common Hessian `H = hI` this gives `x* = c̄` and
/// `σ_G = h · spread` whenever `M ≥ 2`.
pub fn make_quadratic_population(params: &QuadraticPopulationParams) -> Result<PopulationSpec> {
    let QuadraticPopulationParams { clients, dim, spread, .. } = *params;
    if clients == 0 || dim == 0 {
        return Err(Error::InvalidParameter("need at least one client and dim >= 1".into()));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::InvalidParameter(format!("spread must be >= 0, got {spread}")));
    }
    let weights = params.weights.resolve(clients)?;
    let center = match &params.center {
        Some(c) => {
            c.check_dim(dim)?;
            c.clone()
        }
        None => ModelPoint::zeros(dim),
    };

    let directions = spread_directions(clients, dim, &weights, params.seed);
    let centers: Vec<ModelPoint> = directions
        .iter()
        .map(|u| {
            let mut c = center.clone();
            c.axpy(spread, u);
            c
        })
        .collect();
    quadratic_population_from_centers(
        &centers,
        &params.weights,
        &params.hessian,
        params.sigma,
        params.client_sigmas.as_deref(),
    )
}

/// Builds a quadratic population with explicit centers and a common Hessian.
pub fn quadratic_population_from_centers(
    centers: &[ModelPoint],
    weights: &Weights,
    hessian: &HessianSpec,
    sigma: f64,
    client_sigmas: Option<&[f64]>,
) -> Result<PopulationSpec> {
    let m = centers.len();
    let weights = weights.resolve(m)?;
    if let Some(s) = client_sigmas {
        if s.len() != m {
            return Err(Error::DimensionMismatch { expected: m, actual: s.len() });
        }
    }
    let clients = centers
        .iter()
        .enumerate()
        .map(|(id, c)| {
            let noise = client_sigmas.map_or(sigma, |s| s[id]);
            Ok(ClientSpec {
                id,
                objective: ClientObjective::Quadratic(QuadraticObjective::new(hessian, c.clone(), noise)?),
                weight: weights[id],
                sample_count: 1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (optimum, sigma_g) = quadratic_optimum(&clients, &weights);
    PopulationSpec::new(clients, Some(optimum), sigma_g)
}

/// Exact minimiser of `Σ λ_i ½ (x − c_i)ᵀ H_i (x − c_i)` for diagonal `H_i`,
/// and `σ_G = max_i ‖H(c_i − x*)‖` when the Hessians coincide (otherwise the
/// gradient dissimilarity depends on `x` and `None` is returned).
fn quadratic_optimum(clients: &[ClientSpec], weights: &[f64]) -> (ModelPoint, Option<f64>) {
    let quads: Vec<&QuadraticObjective> = clients
        .iter()
        .map(|c| c.objective.as_quadratic().expect("quadratic client"))
        .collect();
    let dim = quads[0].dim();
    let mut num = vec![0.0; dim];
    let mut den = vec![0.0; dim];
    for (q, w) in quads.iter().zip(weights) {
        for j in 0..dim {
            let h = q.hessian_diag()[j];
            num[j] += w * h * q.center().as_slice()[j];
            den[j] += w * h;
        }
    }
    let identical = quads.iter().all(|q| q.center() == quads[0].center());
    let optimum = if identical {
        quads[0].center().clone()
    } else {
        ModelPoint::from_raw(num.iter().zip(&den).map(|(n, d)| n / d).collect())
    };
    let common = quads.iter().all(|q| q.hessian_diag() == quads[0].hessian_diag());
    let sigma_g = common.then(|| {
        let h = quads[0].hessian_diag();
        quads
            .iter()
            .map(|q| {
                q.center()
                    .as_slice()
                    .iter()
                    .zip(optimum.as_slice())
                    .zip(h)
                    .map(|((c, x), h)| (h * (c - x)).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    });
    (optimum, sigma_g)
}

fn spread_directions(clients: usize, dim: usize, weights: &[f64], seed: u64) -> Vec<ModelPoint> {
    let primes = first_primes(dim);
    let mut rng = Stream::new(seed, Purpose::Population, 0, 0);
    let shift: Vec<f64> = (0..dim).map(|_| rng.uniform()).collect();
    let mut dirs: Vec<Vec<f64>> = (0..clients)
        .map(|i| {
            let mut v: Vec<f64> = primes
                .iter()
                .zip(&shift)
                .map(|(&p, s)| {
                    let u = (radical_inverse(i as u64 + 1, p) + s).fract();
                    2.0 * u - 1.0
                })
                .collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|a| *a /= norm);
            }
            v
        })
        .collect();

    let mut mean = vec![0.0; dim];
    for (v, w) in dirs.iter().zip(weights) {
        for (m, a) in mean.iter_mut().zip(v) {
            *m += w * a;
        }
    }
    for v in dirs.iter_mut() {
        for (a, m) in v.iter_mut().zip(&mean) {
            *a -= m;
        }
    }
    let max_norm = dirs
        .iter()
        .map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if max_norm > 1e-12 {
        for v in dirs.iter_mut() {
            v.iter_mut().for_each(|a| *a /= max_norm);
        }
    } else {
        dirs.iter_mut().for_each(|v| v.iter_mut().for_each(|a| *a = 0.0));
    }
    dirs.into_iter().map(ModelPoint::from_raw).collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut n = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= n).all(|&p| n % p != 0) {
            primes.push(n);
        }
        n += 1;
    }
    primes
}

/// Equal-weight mean of the included clients' centers: the fixed point of the
/// noiseless FedAvg map when exactly these clients participate, for any
/// `K ≥ 1` and `η_c ∈ (0, 1/L)`.
pub fn fedavg_fixed_point(pop: &PopulationSpec, included: &[usize]) -> Result<ModelPoint> {
    if included.is_empty() {
        return Err(Error::InvalidParameter("included client set is empty".into()));
    }
    let mut reference: Option<&[f64]> = None;
    let mut total = ModelPoint::zeros(pop.dim());
    for &id in included {
        let client = pop
            .clients()
            .get(id)
            .ok_or_else(|| Error::InvalidParameter(format!("client id {id} out of range")))?;
        let q = client.objective.as_quadratic().ok_or_else(|| {
            Error::InvalidParameter(format!("client {id} is not quadratic"))
        })?;
        match reference {
            None => reference = Some(q.hessian_diag()),
            Some(h) if h != q.hessian_diag() => {
                return Err(Error::InvalidParameter(
                    "fixed-point oracle needs a common Hessian across included clients".into(),
                ))
            }
            Some(_) => {}
        }
        total.axpy(1.0, q.center());
    }
    Ok(total.scaled(1.0 / included.len() as f64))
}
