use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softmax_ce_grad, weighted_cross_entropy, Adam};
use crate::linalg::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Drives the shuffle schedule and dropout masks.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(
                "batch_size must be at least 2 for batch normalization".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("adam betas must lie in [0, 1) and epsilon be positive".into()));
        }
        Ok(())
    }
}

/// A classifier that can be trained by [`fit`].
///
/// `backward` must return gradients in the same order as `params_mut`
/// returns parameter tensors.
pub trait Network {
    type Cache;

    fn input_width(&self) -> usize;

    /// Training-mode forward pass returning softmax probabilities.
    fn forward_train(&mut self, x: &Matrix, rng: &mut ChaCha8Rng) -> (Matrix, Self::Cache);

    fn backward(&self, cache: &Self::Cache, dlogits: &Matrix) -> Vec<Vec<f64>>;

    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    /// Hook run after every optimizer step.
    fn after_step(&mut self) {}
}

/// Mini-batch Adam on the weighted cross-entropy. Returns the weighted mean
/// training loss of every epoch.
///
/// The batch order comes from a ChaCha stream seeded with `cfg.seed`; a
/// trailing batch of one sample is skipped since batch statistics need two.
pub fn fit<N: Network>(net: &mut N, x: &Matrix, labels: &[u8], weights: &[f64], cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x.rows() == 0 {
        return Err(Error::EmptyGroup("training set is empty"));
    }
    if x.cols() != net.input_width() {
        return Err(Error::DimensionMismatch {
            expected: net.input_width(),
            got: x.cols(),
        });
    }
    for len in [labels.len(), weights.len()] {
        if len != x.rows() {
            return Err(Error::DimensionMismatch { expected: x.rows(), got: len });
        }
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Domain("labels must be 0 or 1".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Domain("sample weights must be finite and non-negative".into()));
    }
    if weights.iter().sum::<f64>() == 0.0 {
        return Err(Error::ZeroWeights);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shapes: Vec<usize> = net.params_mut().iter().map(|p| p.len()).collect();
    let mut adam = Adam::new(cfg, &shapes);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut weight_sum) = (0.0, 0.0);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let wb: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
            let total: f64 = wb.iter().sum();
            if total == 0.0 {
                continue;
            }
            let lb: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let xb = x.select_rows(idx);
            let (probs, cache) = net.forward_train(&xb, &mut rng);
            let loss = weighted_cross_entropy(&probs, &lb, &wb)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became {loss} at epoch {epoch}, batch {b}; lower the learning rate (now {})",
                    cfg.learning_rate
                )));
            }
            let dlogits = softmax_ce_grad(&probs, &lb, &wb)?;
            let grads = net.backward(&cache, &dlogits);
            if grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient at epoch {epoch}, batch {b}; lower the learning rate (now {})",
                    cfg.learning_rate
                )));
            }
            adam.step(net.params_mut(), &grads);
            net.after_step();
            loss_sum += loss * total;
            weight_sum += total;
        }
        history.push(if weight_sum > 0.0 { loss_sum / weight_sum } else { 0.0 });
    }
    Ok(history)
}
