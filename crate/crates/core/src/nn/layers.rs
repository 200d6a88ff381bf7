use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{gemm, Matrix};

/// Numerically stable `ln(1 + e^x)`.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `x · tanh(softplus(x))`
#[inline]
pub fn mish(x: f64) -> f64 {
    x * libm::tanh(softplus(x))
}

#[inline]
pub fn mish_grad(x: f64) -> f64 {
    let t = libm::tanh(softplus(x));
    t + x * (1.0 - t * t) * sigmoid(x)
}

#[inline]
pub fn hardtanh(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Derivative of [`hardtanh`], taken as 1 on the closed interval.
#[inline]
pub fn hardtanh_grad(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        1.0
    } else {
        0.0
    }
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Fully connected layer, `y = x Wᵀ + b` with `W` stored out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

pub struct DenseGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub input: Option<Matrix>,
}

impl Dense {
    /// He fan-in initialization, zero bias.
    pub fn new_he<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let scale = libm::sqrt(2.0 / inputs as f64);
        let data = (0..inputs * outputs)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            weights: Matrix::from_vec(outputs, inputs, data).expect("shape"),
            bias: vec![0.0; outputs],
        }
    }

    /// Weights uniform in `±1/√inputs`, zero bias. Used for output layers,
    /// where the He scale makes freshly initialized predictions lopsided.
    pub fn new_uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt(inputs as f64);
        let data = (0..inputs * outputs)
            .map(|_| bound * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        Self {
            weights: Matrix::from_vec(outputs, inputs, data).expect("shape"),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = Matrix::zeros(x.rows(), self.outputs());
        gemm(1.0, x, false, &self.weights, true, 0.0, &mut y);
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        y
    }

    pub fn backward(&self, x: &Matrix, dy: &Matrix, need_input: bool) -> DenseGrads {
        let mut dw = Matrix::zeros(self.outputs(), self.inputs());
        gemm(1.0, dy, true, x, false, 0.0, &mut dw);
        let mut db = vec![0.0; self.outputs()];
        for r in 0..dy.rows() {
            for (acc, v) in db.iter_mut().zip(dy.row(r)) {
                *acc += v;
            }
        }
        let input = need_input.then(|| {
            let mut dx = Matrix::zeros(x.rows(), self.inputs());
            gemm(1.0, dy, false, &self.weights, false, 0.0, &mut dx);
            dx
        });
        DenseGrads {
            weights: dw,
            bias: db,
            input,
        }
    }

    pub fn round_to_f32(&mut self) {
        round_slice(self.weights.as_mut_slice());
        round_slice(&mut self.bias);
    }
}

pub(crate) fn round_slice(values: &mut [f64]) {
    for v in values {
        *v = *v as f32 as f64;
    }
}

/// Batch normalization over the batch dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

pub struct BnCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: 0.9,
            epsilon: 1e-5,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes with batch statistics and folds them into the running
    /// estimates (biased variance).
    pub fn forward_train(&mut self, x: &Matrix) -> (Matrix, BnCache) {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + self.epsilon)).collect();

        let mut xhat = Matrix::zeros(n, d);
        let mut y = Matrix::zeros(n, d);
        for r in 0..n {
            let xr = x.row(r);
            let hr = xhat.row_mut(r);
            for j in 0..d {
                hr[j] = (xr[j] - mean[j]) * inv_std[j];
            }
            let hr = xhat.row(r);
            let yr = y.row_mut(r);
            for j in 0..d {
                yr[j] = self.gamma[j] * hr[j] + self.beta[j];
            }
        }
        let m = self.momentum;
        for j in 0..d {
            self.running_mean[j] = m * self.running_mean[j] + (1.0 - m) * mean[j];
            self.running_var[j] = m * self.running_var[j] + (1.0 - m) * var[j];
        }
        (y, BnCache { xhat, inv_std })
    }

    pub fn forward_infer(&self, x: &Matrix) -> Matrix {
        let mut y = x.clone();
        let scale: Vec<f64> = self
            .gamma
            .iter()
            .zip(&self.running_var)
            .map(|(g, v)| g / libm::sqrt(v + self.epsilon))
            .collect();
        for r in 0..y.rows() {
            for (j, v) in y.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.running_mean[j]) * scale[j] + self.beta[j];
            }
        }
        y
    }

    /// Returns `(dx, dgamma, dbeta)`.
    pub fn backward(&self, cache: &BnCache, dy: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
        let (n, d) = (dy.rows(), dy.cols());
        let mut dgamma = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        for r in 0..n {
            let (dyr, hr) = (dy.row(r), cache.xhat.row(r));
            for j in 0..d {
                dgamma[j] += dyr[j] * hr[j];
                dbeta[j] += dyr[j];
            }
        }
        // dx = γ·inv_std/N · (N·dy − Σdy − x̂·Σ(dy·x̂))
        let nf = n as f64;
        let mut dx = Matrix::zeros(n, d);
        for r in 0..n {
            let (dyr, hr) = (dy.row(r), cache.xhat.row(r));
            let out = dx.row_mut(r);
            for j in 0..d {
                out[j] = self.gamma[j] * cache.inv_std[j] / nf * (nf * dyr[j] - dbeta[j] - hr[j] * dgamma[j]);
            }
        }
        (dx, dgamma, dbeta)
    }

    pub fn round_to_f32(&mut self) {
        for v in [&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var] {
            round_slice(v);
        }
        self.momentum = self.momentum as f32 as f64;
        self.epsilon = self.epsilon as f32 as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mish_examples() {
        assert_eq!(mish(0.0), 0.0);
        assert!((mish(20.0) - 20.0).abs() < 1e-6);
        assert!(mish(-20.0).abs() < 1e-6);
        assert!(mish(1000.0).is_finite() && mish(-1000.0).is_finite());
    }

    #[test]
    fn mish_grad_matches_central_difference() {
        for i in -40..=40 {
            let x = i as f64 * 0.25;
            let h = 1e-5;
            let fd = (mish(x + h) - mish(x - h)) / (2.0 * h);
            assert!((fd - mish_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let m = Matrix::from_vec(2, 2, vec![1000.0, -1000.0, 0.3, 0.3]).unwrap();
        let p = softmax_rows(&m);
        assert_eq!(p.row(0), &[1.0, 0.0]);
        assert_eq!(p.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn batch_norm_inference_is_row_local() {
        let mut bn = BatchNorm::new(2);
        let x = Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        bn.forward_train(&x);
        let one = bn.forward_infer(&Matrix::from_vec(1, 2, vec![3.0, -1.0]).unwrap());
        let all = bn.forward_infer(&x);
        assert_eq!(one.row(0), all.row(1));
    }
}
