use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{mish, mish_grad, softmax_rows, BatchNorm, BnCache, Dense};
use super::train::Network;
use super::{softmax_ce_grad, weighted_cross_entropy};
use crate::linalg::Matrix;
use crate::{Error, Result};

/// Hidden widths of the default full-precision classifier.
pub const FULL_WIDTHS: [usize; 3] = [700, 900, 700];

/// `Dense → BatchNorm → Mish`
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenBlock {
    pub dense: Dense,
    pub bn: BatchNorm,
}

/// Stack of hidden blocks followed by a two-way softmax output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    pub blocks: Vec<HiddenBlock>,
    pub output: Dense,
}

pub struct MlpCache {
    block_inputs: Vec<Matrix>,
    bn_outputs: Vec<Matrix>,
    bn_caches: Vec<BnCache>,
    last_hidden: Matrix,
}

impl MlpClassifier {
    pub fn new(input_width: usize, widths: &[usize], seed: u64) -> Result<Self> {
        if input_width == 0 || widths.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prev = input_width;
        let mut blocks = Vec::with_capacity(widths.len());
        for &w in widths {
            blocks.push(HiddenBlock {
                dense: Dense::new_he(prev, w, &mut rng),
                bn: BatchNorm::new(w),
            });
            prev = w;
        }
        let output = Dense::new_uniform(prev, 2, &mut rng);
        Ok(Self { blocks, output })
    }

    pub fn from_parts(blocks: Vec<HiddenBlock>, output: Dense) -> Result<Self> {
        let model = Self { blocks, output };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let mut prev = self.input_width();
        for b in &self.blocks {
            if b.dense.inputs() != prev {
                return Err(Error::DimensionMismatch {
                    expected: prev,
                    got: b.dense.inputs(),
                });
            }
            if b.bn.dim() != b.dense.outputs() || b.dense.bias.len() != b.dense.outputs() {
                return Err(Error::DimensionMismatch {
                    expected: b.dense.outputs(),
                    got: b.bn.dim(),
                });
            }
            prev = b.dense.outputs();
        }
        if self.output.inputs() != prev || self.output.outputs() != 2 {
            return Err(Error::DimensionMismatch {
                expected: prev,
                got: self.output.inputs(),
            });
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.blocks
            .first()
            .map_or(self.output.inputs(), |b| b.dense.inputs())
    }

    pub fn widths(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dense.outputs()).collect()
    }

    /// Inference-mode probabilities; batch norm uses running statistics.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_width() {
            return Err(Error::DimensionMismatch {
                expected: self.input_width(),
                got: x.cols(),
            });
        }
        let mut a = x.clone();
        for b in &self.blocks {
            a = b.bn.forward_infer(&b.dense.forward(&a));
            a.map_inplace(mish);
        }
        Ok(softmax_rows(&self.output.forward(&a)))
    }

    pub fn parameter_count(&self) -> usize {
        let dense = |d: &Dense| d.weights.as_slice().len() + d.bias.len();
        self.blocks.iter().map(|b| dense(&b.dense) + 2 * b.bn.dim()).sum::<usize>() + dense(&self.output)
    }

    pub fn round_to_f32(&mut self) {
        for b in &mut self.blocks {
            b.dense.round_to_f32();
            b.bn.round_to_f32();
        }
        self.output.round_to_f32();
    }

    fn loss(&mut self, x: &Matrix, labels: &[u8], weights: &[f64]) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (probs, _) = self.forward_train(x, &mut rng);
        weighted_cross_entropy(&probs, labels, weights)
    }
}

impl Network for MlpClassifier {
    type Cache = MlpCache;

    fn input_width(&self) -> usize {
        MlpClassifier::input_width(self)
    }

    fn forward_train(&mut self, x: &Matrix, _rng: &mut ChaCha8Rng) -> (Matrix, MlpCache) {
        let mut cache = MlpCache {
            block_inputs: Vec::with_capacity(self.blocks.len()),
            bn_outputs: Vec::with_capacity(self.blocks.len()),
            bn_caches: Vec::with_capacity(self.blocks.len()),
            last_hidden: Matrix::zeros(0, 0),
        };
        let mut a = x.clone();
        for b in &mut self.blocks {
            let z = b.dense.forward(&a);
            let (u, bn_cache) = b.bn.forward_train(&z);
            let mut h = u.clone();
            h.map_inplace(mish);
            cache.block_inputs.push(a);
            cache.bn_outputs.push(u);
            cache.bn_caches.push(bn_cache);
            a = h;
        }
        let probs = softmax_rows(&self.output.forward(&a));
        cache.last_hidden = a;
        (probs, cache)
    }

    fn backward(&self, cache: &MlpCache, dlogits: &Matrix) -> Vec<Vec<f64>> {
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(4 * self.blocks.len() + 2);
        let out = self.output.backward(&cache.last_hidden, dlogits, !self.blocks.is_empty());
        let mut tail = vec_pair(out.weights.into_vec(), out.bias);
        let mut da = out.input;
        let mut per_block: Vec<[Vec<f64>; 4]> = Vec::with_capacity(self.blocks.len());
        for (k, b) in self.blocks.iter().enumerate().rev() {
            let mut du = da.take().expect("upstream gradient");
            let u = &cache.bn_outputs[k];
            for (g, x) in du.as_mut_slice().iter_mut().zip(u.as_slice()) {
                *g *= mish_grad(*x);
            }
            let (dz, dgamma, dbeta) = b.bn.backward(&cache.bn_caches[k], &du);
            let dense = b.dense.backward(&cache.block_inputs[k], &dz, k > 0);
            da = dense.input;
            per_block.push([dense.weights.into_vec(), dense.bias, dgamma, dbeta]);
        }
        for block in per_block.into_iter().rev() {
            grads.extend(block);
        }
        grads.append(&mut tail);
        grads
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &mut self.blocks {
            out.push(b.dense.weights.as_mut_slice());
            out.push(&mut b.dense.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(self.output.weights.as_mut_slice());
        out.push(&mut self.output.bias);
        out
    }
}

fn vec_pair(a: Vec<f64>, b: Vec<f64>) -> Vec<Vec<f64>> {
    alloc::vec![a, b]
}

/// Largest relative error between the analytic gradient of the weighted
/// loss and five-point central differences (`h = 1e-4`) over every
/// parameter. The fourth-order stencil matters for near-zero gradients,
/// where the truncation error of the plain two-point formula dominates.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps
/// exactly-zero gradients (e.g. dense biases feeding batch norm) from
/// turning rounding noise into huge ratios. Batch norm runs in training
/// mode, so the loss is a deterministic function of the batch.
pub fn gradient_check(model: &MlpClassifier, x: &Matrix, labels: &[u8], weights: &[f64]) -> Result<f64> {
    const H: f64 = 1e-4;
    let mut work = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (probs, cache) = work.forward_train(x, &mut rng);
    let dlogits = softmax_ce_grad(&probs, labels, weights)?;
    let analytic = work.backward(&cache, &dlogits);

    let mut worst: f64 = 0.0;
    for (p, grad) in analytic.iter().enumerate() {
        for (i, &g) in grad.iter().enumerate() {
            let original = work.params_mut()[p][i];
            let mut at = |offset: f64| {
                work.params_mut()[p][i] = original + offset;
                work.loss(x, labels, weights)
            };
            let (up, down) = (at(H)?, at(-H)?);
            let (up2, down2) = (at(2.0 * H)?, at(-2.0 * H)?);
            work.params_mut()[p][i] = original;
            let numeric = (8.0 * (up - down) - (up2 - down2)) / (12.0 * H);
            let denom = g.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((g - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// Analytic gradients of the weighted loss, in parameter order.
pub fn analytic_gradients(model: &MlpClassifier, x: &Matrix, labels: &[u8], weights: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut work = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (probs, cache) = work.forward_train(x, &mut rng);
    let dlogits = softmax_ce_grad(&probs, labels, weights)?;
    Ok(work.backward(&cache, &dlogits))
}

#[cfg(test)]
mod tests {
    use super::super::{fit, predict, TrainConfig};
    use super::*;
    use alloc::vec;
    use rand::Rng;

    fn small_batch(seed: u64, rows: usize, cols: usize) -> (Matrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let labels = (0..rows).map(|i| (i % 2) as u8).collect();
        (Matrix::from_vec(rows, cols, data).unwrap(), labels)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            let model = MlpClassifier::new(5, &[7, 6], seed).unwrap();
            let (x, y) = small_batch(seed + 100, 8, 5);
            let w: Vec<f64> = (0..8).map(|i| 0.5 + i as f64 * 0.25).collect();
            let err = gradient_check(&model, &x, &y, &w).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn dead_input_column_gets_no_gradient() {
        let model = MlpClassifier::new(4, &[6, 5], 9).unwrap();
        let (mut x, y) = small_batch(10, 6, 4);
        for r in 0..6 {
            x.row_mut(r)[2] = 0.0;
        }
        let grads = analytic_gradients(&model, &x, &y, &[1.0; 6]).unwrap();
        let first_layer = &grads[0];
        for out in 0..6 {
            assert!(first_layer[out * 4 + 2].abs() < 1e-8);
        }
    }

    #[test]
    fn doubling_weights_leaves_gradients_unchanged() {
        let model = MlpClassifier::new(4, &[6, 5], 3).unwrap();
        let (x, y) = small_batch(4, 6, 4);
        let w: Vec<f64> = (0..6).map(|i| 1.0 + i as f64 * 0.3).collect();
        let w2: Vec<f64> = w.iter().map(|v| v * 2.0).collect();
        assert_eq!(
            analytic_gradients(&model, &x, &y, &w).unwrap(),
            analytic_gradients(&model, &x, &y, &w2).unwrap()
        );
    }

    #[test]
    fn inference_rows_are_distributions_and_batch_independent() {
        let model = MlpClassifier::new(6, &[16, 16, 16], 1).unwrap();
        let (x, _) = small_batch(2, 32, 6);
        let p = model.forward(&x).unwrap();
        for r in 0..32 {
            let row = p.row(r);
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((row[0] + row[1] - 1.0).abs() < 1e-7);
        }
        let single = model.forward(&x.select_rows(&[5])).unwrap();
        assert_eq!(single.row(0), p.row(5));
        let dup = model.forward(&x.select_rows(&[3, 3])).unwrap();
        assert_eq!(dup.row(0), dup.row(1));
    }

    #[test]
    fn fresh_default_model_is_undecided_on_average() {
        let model = MlpClassifier::new(58, &FULL_WIDTHS, 0).unwrap();
        let (x, _) = small_batch(2, 64, 58);
        let p = model.forward(&x).unwrap();
        let mean = (0..64).map(|r| p.get(r, 1)).sum::<f64>() / 64.0;
        assert!((mean - 0.5).abs() <= 0.1, "{mean}");
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let model = MlpClassifier::new(6, &[4], 1).unwrap();
        assert!(matches!(
            model.forward(&Matrix::zeros(2, 5)),
            Err(Error::DimensionMismatch { expected: 6, got: 5 })
        ));
    }

    fn separable(n: usize, seed: u64) -> (Matrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        while labels.len() < n {
            let (a, b): (f64, f64) = (rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0);
            let margin = a + 0.5 * b;
            if margin.abs() < 0.2 {
                continue;
            }
            data.extend([a, b]);
            labels.push(u8::from(margin > 0.0));
        }
        (Matrix::from_vec(n, 2, data).unwrap(), labels)
    }

    #[test]
    fn learns_a_separable_toy_problem() {
        let (x, y) = separable(200, 5);
        let mut model = MlpClassifier::new(2, &[16, 16], 7).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-2,
            seed: 11,
            ..TrainConfig::default()
        };
        let history = fit(&mut model, &x, &y, &[1.0; 200], &cfg).unwrap();
        assert!(history.last().unwrap() < &history[0]);
        let p = model.forward(&x).unwrap();
        let correct = (0..200).filter(|&i| predict(p.row(i)) == y[i]).count();
        assert!(correct as f64 / 200.0 >= 0.99, "accuracy {correct}/200");
    }

    #[test]
    fn uniform_weight_scale_does_not_change_training() {
        let (x, y) = separable(64, 6);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 1e-2,
            seed: 3,
            ..TrainConfig::default()
        };
        let mut a = MlpClassifier::new(2, &[8, 8], 2).unwrap();
        let mut b = a.clone();
        fit(&mut a, &x, &y, &vec![1.0; 64], &cfg).unwrap();
        fit(&mut b, &x, &y, &vec![3.0; 64], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = separable(50, 8);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 21,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = MlpClassifier::new(2, &[8], 4).unwrap();
            fit(&mut m, &x, &y, &[1.0; 50], &cfg).unwrap();
            m
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bad_training_inputs_are_rejected() {
        let (x, y) = separable(10, 1);
        let mut m = MlpClassifier::new(2, &[4], 0).unwrap();
        let cfg = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(fit(&mut m, &x, &y, &[1.0; 10], &cfg), Err(Error::InvalidConfig(_))));
        let cfg = TrainConfig::default();
        assert!(fit(&mut m, &x, &y, &[1.0; 9], &cfg).is_err());
        assert_eq!(fit(&mut m, &x, &y, &[0.0; 10], &cfg), Err(Error::ZeroWeights));
    }

    #[test]
    fn diverging_training_reports_numeric_failure() {
        let (x, y) = separable(40, 2);
        let mut m = MlpClassifier::new(2, &[8], 0).unwrap();
        let w = vec![1.0; 40];
        // Poison the input so the loss becomes NaN.
        let mut x = x;
        x.row_mut(0)[0] = f64::NAN;
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 40,
            ..TrainConfig::default()
        };
        assert!(matches!(fit(&mut m, &x, &y, &w, &cfg), Err(Error::Numeric(_))));
    }
}
