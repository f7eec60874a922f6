use super::data::{cross_entropy, softmax_in_place, DataShard};
use super::{ModelPoint, ObjectiveConstants};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Multinomial logistic regression without bias, with optional L2 penalty.
///
/// Parameters are a `classes × dim` weight matrix stored row-major. The loss is
/// the mean cross-entropy over the shard plus `½ λ ‖W‖²`. Minibatches are drawn
/// uniformly with replacement, which keeps the stochastic gradient unbiased.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    shard: DataShard,
    l2: f64,
    batch_size: usize,
}

impl LogisticObjective {
    pub fn new(shard: DataShard, l2: f64, batch_size: usize) -> Result<Self> {
        if !(l2.is_finite() && l2 >= 0.0) {
            return Err(Error::InvalidParameter(format!("l2 must be >= 0, got {l2}")));
        }
        if batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        Ok(Self {
            shard,
            l2,
            batch_size,
        })
    }

    pub fn shard(&self) -> &DataShard {
        &self.shard
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn dim(&self) -> usize {
        self.shard.data.dim() * self.shard.data.classes()
    }

    fn logits(&self, x: &[f64], row: &[f64], out: &mut [f64]) {
        let d = row.len();
        for (c, o) in out.iter_mut().enumerate() {
            let w = &x[c * d..(c + 1) * d];
            *o = w.iter().zip(row).map(|(a, b)| a * b).sum();
        }
    }

    pub fn loss(&self, x: &ModelPoint) -> Result<f64> {
        x.check_dim(self.dim())?;
        let data = &self.shard.data;
        let mut logits = vec![0.0; data.classes()];
        let mut total = 0.0;
        for &i in self.shard.indices.iter() {
            self.logits(x.as_slice(), data.row(i), &mut logits);
            total += cross_entropy(&logits, data.label(i));
        }
        let v = total / self.shard.len() as f64 + 0.5 * self.l2 * x.norm_sq();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { context: "logistic loss" })
        }
    }

    fn gradient_over<I: Iterator<Item = usize>>(&self, x: &ModelPoint, rows: I, count: usize) -> Result<(f64, ModelPoint)> {
        x.check_dim(self.dim())?;
        let data = &self.shard.data;
        let d = data.dim();
        let mut grad = vec![0.0; self.dim()];
        let mut probs = vec![0.0; data.classes()];
        let mut loss = 0.0;
        for i in rows {
            let row = data.row(i);
            self.logits(x.as_slice(), row, &mut probs);
            loss += cross_entropy(&probs, data.label(i));
            softmax_in_place(&mut probs);
            probs[data.label(i)] -= 1.0;
            for (c, &r) in probs.iter().enumerate() {
                if r == 0.0 {
                    continue;
                }
                for (g, a) in grad[c * d..(c + 1) * d].iter_mut().zip(row) {
                    *g += r * a;
                }
            }
        }
        let inv = 1.0 / count as f64;
        for (g, w) in grad.iter_mut().zip(x.as_slice()) {
            *g = *g * inv + self.l2 * w;
        }
        let g = ModelPoint::from_raw(grad);
        g.ensure_finite("logistic gradient")?;
        Ok((loss * inv + 0.5 * self.l2 * x.norm_sq(), g))
    }

    pub fn exact_gradient(&self, x: &ModelPoint) -> Result<ModelPoint> {
        self.gradient_over(x, self.shard.indices.iter().copied(), self.shard.len()).map(|r| r.1)
    }

    /// Loss and exact gradient from a single pass over the shard.
    pub fn loss_and_gradient(&self, x: &ModelPoint) -> Result<(f64, ModelPoint)> {
        let (loss, g) = self.gradient_over(x, self.shard.indices.iter().copied(), self.shard.len())?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { context: "logistic loss" });
        }
        Ok((loss, g))
    }

    pub fn stochastic_gradient(&self, x: &ModelPoint, rng: &mut Stream) -> Result<ModelPoint> {
        let n = self.shard.len();
        let batch: Vec<usize> = (0..self.batch_size)
            .map(|_| self.shard.indices[rng.index(n)])
            .collect();
        self.gradient_over(x, batch.into_iter(), self.batch_size).map(|r| r.1)
    }

    /// Upper estimates. The softmax Hessian block is bounded by `½ I`, so
    /// `L ≤ ½ · mean‖a‖² + λ` (mean squared row norm bounds the spectral norm
    /// of the empirical second-moment matrix). Per-sample gradient residuals
    /// have norm at most `√2`, giving `σ² ≤ 2 · max‖a‖² / batch`.
    pub fn constants(&self) -> ObjectiveConstants {
        let data = &self.shard.data;
        let (mut sum_sq, mut max_sq) = (0.0f64, 0.0f64);
        for &i in self.shard.indices.iter() {
            let s: f64 = data.row(i).iter().map(|v| v * v).sum();
            sum_sq += s;
            max_sq = max_sq.max(s);
        }
        let mean_sq = sum_sq / self.shard.len() as f64;
        ObjectiveConstants {
            lipschitz: Some(0.5 * mean_sq + self.l2),
            strong_convexity: (self.l2 > 0.0).then_some(self.l2),
            sigma_bound: Some((2.0 * max_sq / self.batch_size as f64).sqrt()),
        }
    }

    /// Fraction of rows in `shard` whose arg-max class matches the label.
    pub fn accuracy(x: &ModelPoint, shard: &DataShard) -> f64 {
        let data = &shard.data;
        let d = data.dim();
        let mut correct = 0usize;
        for &i in shard.indices.iter() {
            let row = data.row(i);
            let best = (0..data.classes())
                .map(|c| {
                    let s: f64 = x.as_slice()[c * d..(c + 1) * d]
                        .iter()
                        .zip(row)
                        .map(|(a, b)| a * b)
                        .sum();
                    (c, s)
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(c, _)| c)
                .unwrap_or(0);
            if best == data.label(i) {
                correct += 1;
            }
        }
        correct as f64 / shard.len() as f64
    }
}
