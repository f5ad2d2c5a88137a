//! Training hyperparameters, SGD with momentum and inverted dropout.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NetworkParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
    pub dropout_input: f64,
    pub dropout_hidden: f64,
    pub epochs: usize,
    pub chunk_frames: usize,
    pub chunk_overlap: f64,
    /// Divide each chunk loss and gradient by the squared count of weighted
    /// rows. Off reproduces the raw loss.
    pub normalize_loss: bool,
    /// Chunks whose gradients are summed before one optimizer step.
    pub batch_chunks: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            momentum: 0.9,
            l2: 1e-6,
            dropout_input: 0.2,
            dropout_hidden: 0.5,
            epochs: 30,
            chunk_frames: 100,
            chunk_overlap: 0.5,
            normalize_loss: false,
            batch_chunks: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings sized for minutes of CPU time on the small network profile.
    pub fn desk() -> Self {
        Self {
            learning_rate: 0.05,
            dropout_input: 0.0,
            dropout_hidden: 0.0,
            epochs: 12,
            normalize_loss: true,
            batch_chunks: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("learning_rate", self.learning_rate),
            ("momentum", self.momentum),
            ("l2", self.l2),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("{v} must be finite and non-negative")));
            }
        }
        for (name, v) in [("dropout_input", self.dropout_input), ("dropout_hidden", self.dropout_hidden)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::param(name, format!("{v} is outside [0, 1)")));
            }
        }
        if self.chunk_frames == 0 {
            return Err(Error::param("chunk_frames", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.chunk_overlap) {
            return Err(Error::param("chunk_overlap", "must lie in [0, 1)"));
        }
        if self.batch_chunks == 0 {
            return Err(Error::param("batch_chunks", "must be positive"));
        }
        Ok(())
    }
}

/// `v <- momentum * v - lr * (g + l2 * w)`, then `w <- w + v`, for every
/// trainable tensor.
pub fn sgd_step(params: &mut NetworkParams, grads: &NetworkParams, cfg: &TrainConfig, velocity: &mut NetworkParams) {
    let g = grads.trainable();
    for ((w, v), g) in params.trainable_mut().into_iter().zip(velocity.trainable_mut()).zip(g) {
        for ((w, v), g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
            *v = cfg.momentum * *v - cfg.learning_rate * (g + cfg.l2 * *w);
            *w += *v;
        }
    }
}

/// Keep-mask scaled by `1 / (1 - rate)`; `None` when the layer is not dropped.
pub(crate) fn dropout_mask(shape: (usize, usize), rate: f64, rng: &mut ChaCha8Rng) -> Option<Array2<f64>> {
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < rate { 0.0 } else { keep }))
}

/// Inverted dropout: in training mode each entry is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; otherwise identity.
pub fn dropout(x: &Array2<f64>, rate: f64, seed: u64, training: bool) -> Result<Array2<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::param("rate", format!("{rate} is outside [0, 1)")));
    }
    if !training {
        return Ok(x.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match dropout_mask(x.dim(), rate, &mut rng) {
        Some(m) => x * &m,
        None => x.clone(),
    })
}
