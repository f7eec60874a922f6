use serde::{Deserialize, Serialize};

use super::data::{cross_entropy, softmax_in_place, DataShard};
use super::{ModelPoint, ObjectiveConstants};
use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a = f(z)`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

struct Scratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    back: Vec<f64>,
}

/// Fully connected network with a softmax cross-entropy head.
///
/// Parameter layout: for each layer, the `out × in` weight matrix (row-major)
/// followed by the `out` biases.
#[derive(Debug, Clone)]
pub struct MlpObjective {
    layer_sizes: Vec<usize>,
    activation: Activation,
    shard: DataShard,
    batch_size: usize,
    offsets: Vec<usize>,
    dim: usize,
}

impl MlpObjective {
    pub fn new(
        layer_sizes: Vec<usize>,
        activation: Activation,
        shard: DataShard,
        batch_size: usize,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidParameter(
                "MLP needs at least an input and an output layer, all sizes positive".into(),
            ));
        }
        if layer_sizes[0] != shard.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: layer_sizes[0],
                actual: shard.data.dim(),
            });
        }
        if *layer_sizes.last().unwrap() != shard.data.classes() {
            return Err(Error::InvalidParameter(format!(
                "output layer width {} does not match {} classes",
                layer_sizes.last().unwrap(),
                shard.data.classes()
            )));
        }
        if batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        let mut offsets = Vec::with_capacity(layer_sizes.len());
        let mut dim = 0;
        for w in layer_sizes.windows(2) {
            offsets.push(dim);
            dim += w[0] * w[1] + w[1];
        }
        offsets.push(dim);
        Ok(Self {
            layer_sizes,
            activation,
            shard,
            batch_size,
            offsets,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn shard(&self) -> &DataShard {
        &self.shard
    }

    /// Deterministic small random initialisation (scaled by `1/√fan_in`).
    pub fn init_point(&self, rng: &mut Stream) -> ModelPoint {
        let mut values = vec![0.0; self.dim];
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            let base = self.offsets[l];
            for v in &mut values[base..base + fan_in * fan_out] {
                *v = scale * rng.normal();
            }
        }
        ModelPoint::from_raw(values)
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            acts: self.layer_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: vec![0.0; self.layer_sizes.iter().copied().max().unwrap_or(0)],
            back: vec![0.0; self.layer_sizes.iter().copied().max().unwrap_or(0)],
        }
    }

    /// Forward pass into `scratch.acts` (input included, output as raw logits).
    fn forward(&self, params: &[f64], input: &[f64], scratch: &mut Scratch) {
        let layers = self.layer_sizes.len() - 1;
        scratch.acts[0].copy_from_slice(input);
        for l in 0..layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let base = self.offsets[l];
            let weights = &params[base..base + n_in * n_out];
            let biases = &params[base + n_in * n_out..base + n_in * n_out + n_out];
            let (head, tail) = scratch.acts.split_at_mut(l + 1);
            let prev = &head[l];
            let next = &mut tail[0];
            for o in 0..n_out {
                let z = weights[o * n_in..(o + 1) * n_in].iter().zip(prev).map(|(w, a)| w * a).sum::<f64>() + biases[o];
                next[o] = if l + 1 < layers { self.activation.apply(z) } else { z };
            }
        }
    }

    /// Adds the per-sample gradient to `grad` and returns the sample loss.
    fn accumulate_gradient(&self, params: &[f64], row: &[f64], label: usize, grad: &mut [f64], scratch: &mut Scratch) -> f64 {
        let layers = self.layer_sizes.len() - 1;
        self.forward(params, row, scratch);
        let n_classes = self.layer_sizes[layers];
        let loss = cross_entropy(&scratch.acts[layers], label);
        let delta = &mut scratch.delta[..n_classes];
        delta.copy_from_slice(&scratch.acts[layers]);
        softmax_in_place(delta);
        delta[label] -= 1.0;
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let base = self.offsets[l];
            let prev = &scratch.acts[l];
            for o in 0..n_out {
                let d = scratch.delta[o];
                for (g, a) in grad[base + o * n_in..base + (o + 1) * n_in].iter_mut().zip(prev) {
                    *g += d * a;
                }
                grad[base + n_in * n_out + o] += d;
            }
            if l > 0 {
                let weights = &params[base..base + n_in * n_out];
                let back = &mut scratch.back[..n_in];
                back.fill(0.0);
                for o in 0..n_out {
                    let d = scratch.delta[o];
                    for (b, w) in back.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *b += d * w;
                    }
                }
                for (b, a) in back.iter_mut().zip(prev) {
                    *b *= self.activation.derivative_from_output(*a);
                }
                scratch.delta[..n_in].copy_from_slice(back);
            }
        }
        loss
    }

    fn gradient_over<I: Iterator<Item = usize>>(&self, x: &ModelPoint, rows: I, count: usize) -> Result<(f64, ModelPoint)> {
        x.check_dim(self.dim)?;
        let data = &self.shard.data;
        let mut grad = vec![0.0; self.dim];
        let mut scratch = self.scratch();
        let mut loss = 0.0;
        for i in rows {
            loss += self.accumulate_gradient(x.as_slice(), data.row(i), data.label(i), &mut grad, &mut scratch);
        }
        let inv = 1.0 / count as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        let g = ModelPoint::from_raw(grad);
        g.ensure_finite("mlp gradient")?;
        Ok((loss * inv, g))
    }

    pub fn loss(&self, x: &ModelPoint) -> Result<f64> {
        x.check_dim(self.dim)?;
        let data = &self.shard.data;
        let layers = self.layer_sizes.len() - 1;
        let mut scratch = self.scratch();
        let mut total = 0.0;
        for &i in self.shard.indices.iter() {
            self.forward(x.as_slice(), data.row(i), &mut scratch);
            total += cross_entropy(&scratch.acts[layers], data.label(i));
        }
        let v = total / self.shard.len() as f64;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { context: "mlp loss" })
        }
    }

    /// Loss and exact gradient from a single pass over the shard.
    pub fn loss_and_gradient(&self, x: &ModelPoint) -> Result<(f64, ModelPoint)> {
        let (loss, g) = self.gradient_over(x, self.shard.indices.iter().copied(), self.shard.len())?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { context: "mlp loss" });
        }
        Ok((loss, g))
    }

    pub fn exact_gradient(&self, x: &ModelPoint) -> Result<ModelPoint> {
        self.gradient_over(x, self.shard.indices.iter().copied(), self.shard.len()).map(|r| r.1)
    }

    pub fn stochastic_gradient(&self, x: &ModelPoint, rng: &mut Stream) -> Result<ModelPoint> {
        let n = self.shard.len();
        let batch: Vec<usize> = (0..self.batch_size)
            .map(|_| self.shard.indices[rng.index(n)])
            .collect();
        self.gradient_over(x, batch.into_iter(), self.batch_size).map(|r| r.1)
    }

    /// No global smoothness or convexity constants are available for the
    /// network; all fields are `None`.
    pub fn constants(&self) -> ObjectiveConstants {
        ObjectiveConstants {
            lipschitz: None,
            strong_convexity: None,
            sigma_bound: None,
        }
    }
}
