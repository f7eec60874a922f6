use std::sync::Arc;

use crate::error::{Error, Result};

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, classes: usize) -> Result<Self> {
        if dim == 0 || classes == 0 {
            return Err(Error::InvalidParameter(
                "dataset needs dim >= 1 and classes >= 1".into(),
            ));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Data(format!(
                "feature buffer holds {} values, expected {} rows x {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Data(format!("label {bad} outside 0..{classes}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            dim,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// A view onto a shared dataset restricted to a subset of rows.
#[derive(Debug, Clone)]
pub struct DataShard {
    pub data: Arc<Dataset>,
    pub indices: Arc<[usize]>,
}

impl DataShard {
    pub fn new(data: Arc<Dataset>, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Data("data shard is empty".into()));
        }
        if let Some(bad) = indices.iter().find(|&&i| i >= data.len()) {
            return Err(Error::Data(format!(
                "shard index {bad} out of range for {} rows",
                data.len()
            )));
        }
        Ok(Self {
            data,
            indices: indices.into(),
        })
    }

    pub fn full(data: Arc<Dataset>) -> Result<Self> {
        let n = data.len();
        Self::new(data, (0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Numerically stable in-place softmax.
pub(crate) fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in logits.iter_mut() {
        *v /= total;
    }
}

/// `-log softmax(logits)[label]`, computed via log-sum-exp.
pub(crate) fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}
