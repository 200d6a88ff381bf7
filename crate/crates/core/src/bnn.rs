//! Binarized classifier with bit-packed inference.
//!
//! Layout: a full-precision input layer, one or more ±1 layers without
//! bias, dropout, a full-precision last hidden layer and a softmax output.
//! Every layer before the last hidden one ends in `BN → HardTanh → sign`;
//! the last hidden layer ends in `BN → HardTanh`.
//!
//! Training keeps full-precision latent weights behind the binary layers and
//! uses the clipped straight-through estimator for both weight and
//! activation signs. Packed rows are row-major, least significant bit
//! first, with bit 1 meaning +1 and the trailing partial byte zero-padded.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{gemm, Matrix};
use crate::nn::{fit, hardtanh, hardtanh_grad, softmax_rows, BatchNorm, BnCache, Dense, Network, TrainConfig};
use crate::{Error, Result};

/// `sign` with `sign(0) = +1`.
#[inline]
pub fn binarize_forward(x: f64) -> f64 {
    if x >= 0.0 || x.is_nan() {
        1.0
    } else {
        -1.0
    }
}

/// Clipped straight-through estimator: pass iff `|x| ≤ 1`.
#[inline]
pub fn binarize_backward(upstream: f64, x: f64) -> f64 {
    if x.abs() <= 1.0 {
        upstream
    } else {
        0.0
    }
}

/// Sign matrix stored one bit per entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBits {
    rows: usize,
    cols: usize,
    bytes: Vec<u8>,
}

impl PackedBits {
    pub fn row_bytes(cols: usize) -> usize {
        cols.div_ceil(8)
    }

    pub fn payload_len(rows: usize, cols: usize) -> usize {
        rows * Self::row_bytes(cols)
    }

    /// Packs a row-major matrix by sign.
    pub fn from_signs(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        let stride = Self::row_bytes(cols);
        let mut bytes = vec![0u8; rows * stride];
        for r in 0..rows {
            for c in 0..cols {
                if binarize_forward(values[r * cols + c]) > 0.0 {
                    bytes[r * stride + c / 8] |= 1 << (c % 8);
                }
            }
        }
        Ok(Self { rows, cols, bytes })
    }

    /// Rejects payloads of the wrong length or with set padding bits.
    pub fn from_bytes(rows: usize, cols: usize, bytes: Vec<u8>) -> Result<Self> {
        let expected = Self::payload_len(rows, cols);
        if bytes.len() != expected {
            return Err(Error::CorruptPayload {
                expected,
                got: bytes.len(),
            });
        }
        let stride = Self::row_bytes(cols);
        if !cols.is_multiple_of(8) {
            let pad_mask = !((1u8 << (cols % 8)) - 1);
            for r in 0..rows {
                if bytes[r * stride + stride - 1] & pad_mask != 0 {
                    return Err(Error::Domain("packed row has non-zero padding bits".into()));
                }
            }
        }
        Ok(Self { rows, cols, bytes })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bytes[r * Self::row_bytes(self.cols) + c / 8] >> (c % 8) & 1 == 1
    }

    /// Row-major ±1 values.
    pub fn to_signs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(if self.get(r, c) { 1.0 } else { -1.0 });
            }
        }
        out
    }

    /// Rows as little-endian 64-bit words, so bit `c` of a row is bit
    /// `c % 64` of word `c / 64`.
    fn words(&self) -> Vec<u64> {
        let stride = Self::row_bytes(self.cols);
        let per_row = self.cols.div_ceil(64);
        let mut out = vec![0u64; self.rows * per_row];
        for r in 0..self.rows {
            for (i, &b) in self.bytes[r * stride..(r + 1) * stride].iter().enumerate() {
                out[r * per_row + i / 8] |= u64::from(b) << (8 * (i % 8));
            }
        }
        out
    }
}

/// `2·popcount(XNOR(a, w)) − width` for zero-padded word rows.
#[inline]
pub fn xnor_dot(a: &[u64], w: &[u64], width: usize) -> i64 {
    let matches: u32 = a.iter().zip(w).map(|(x, y)| (!(x ^ y)).count_ones()).sum();
    let padding = a.len() * 64 - width;
    2 * (i64::from(matches) - padding as i64) - width as i64
}

/// ±1 layer without bias, `y = x sign(W)ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDense {
    /// Full-precision weights behind the signs, kept within [−1, 1].
    pub latent: Matrix,
    packed: Option<PackedBits>,
}

impl BinaryDense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let data = (0..inputs * outputs)
            .map(|_| (0.1 * rng.sample::<f64, _>(StandardNormal)).clamp(-1.0, 1.0))
            .collect();
        Self {
            latent: Matrix::from_vec(outputs, inputs, data).expect("shape"),
            packed: None,
        }
    }

    /// A packed layer whose latent weights are the ±1 signs themselves.
    pub fn from_packed(packed: PackedBits) -> Self {
        let latent = Matrix::from_vec(packed.rows(), packed.cols(), packed.to_signs()).expect("shape");
        Self {
            latent,
            packed: Some(packed),
        }
    }

    pub fn inputs(&self) -> usize {
        self.latent.cols()
    }

    pub fn outputs(&self) -> usize {
        self.latent.rows()
    }

    pub fn signs(&self) -> Matrix {
        let mut m = self.latent.clone();
        m.map_inplace(binarize_forward);
        m
    }

    pub fn packed(&self) -> Option<&PackedBits> {
        self.packed.as_ref()
    }

    /// Packs the weight signs and snaps the latent weights onto them.
    pub fn pack(&mut self) {
        let packed = PackedBits::from_signs(self.outputs(), self.inputs(), self.latent.as_slice()).expect("shape");
        *self = Self::from_packed(packed);
    }

    pub fn payload_bytes(&self) -> usize {
        PackedBits::payload_len(self.outputs(), self.inputs())
    }

    fn clip_latent(&mut self) {
        self.latent.map_inplace(|w| w.clamp(-1.0, 1.0));
        self.packed = None;
    }
}

/// `BinaryDense → BN → HardTanh → sign`
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryBlock {
    pub dense: BinaryDense,
    pub bn: BatchNorm,
}

/// Layer widths of the binarized classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiteArch {
    /// Width of the full-precision input layer.
    pub input_width: usize,
    pub binary_widths: Vec<usize>,
    /// Width of the full-precision last hidden layer.
    pub last_width: usize,
    pub dropout: f64,
}

impl Default for LiteArch {
    fn default() -> Self {
        Self {
            input_width: 128,
            binary_widths: vec![1024, 1024],
            last_width: 16,
            dropout: 0.2,
        }
    }
}

impl LiteArch {
    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.last_width == 0 || self.binary_widths.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        if self.binary_widths.is_empty() {
            return Err(Error::InvalidConfig("at least one binarized layer is required".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnnClassifier {
    pub input: Dense,
    pub input_bn: BatchNorm,
    pub binary: Vec<BinaryBlock>,
    pub last: Dense,
    pub last_bn: BatchNorm,
    pub output: Dense,
    pub dropout: f64,
}

pub struct BnnCache {
    x: Matrix,
    input_u: Matrix,
    input_bn: BnCache,
    block_inputs: Vec<Matrix>,
    block_u: Vec<Matrix>,
    block_bn: Vec<BnCache>,
    mask: Vec<f64>,
    last_in: Matrix,
    last_u: Matrix,
    last_bn: BnCache,
    last_h: Matrix,
}

fn sign_matrix(u: &Matrix) -> Matrix {
    let mut a = u.clone();
    a.map_inplace(binarize_forward);
    a
}

fn ste(mut upstream: Matrix, u: &Matrix) -> Matrix {
    for (g, x) in upstream.as_mut_slice().iter_mut().zip(u.as_slice()) {
        *g = binarize_backward(*g, *x);
    }
    upstream
}

impl BnnClassifier {
    pub fn new(features: usize, arch: &LiteArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        if features == 0 {
            return Err(Error::InvalidConfig("input width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = Dense::new_he(features, arch.input_width, &mut rng);
        let mut prev = arch.input_width;
        let mut binary = Vec::with_capacity(arch.binary_widths.len());
        for &w in &arch.binary_widths {
            binary.push(BinaryBlock {
                dense: BinaryDense::new(prev, w, &mut rng),
                bn: BatchNorm::new(w),
            });
            prev = w;
        }
        let last = Dense::new_he(prev, arch.last_width, &mut rng);
        let output = Dense::new_uniform(arch.last_width, 2, &mut rng);
        Ok(Self {
            input,
            input_bn: BatchNorm::new(arch.input_width),
            binary,
            last,
            last_bn: BatchNorm::new(arch.last_width),
            output,
            dropout: arch.dropout,
        })
    }

    /// Checks that adjacent layers agree on their widths.
    pub fn check_shapes(&self) -> Result<()> {
        let mismatch = |expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected, got })
            }
        };
        if self.binary.is_empty() {
            return Err(Error::InvalidConfig("at least one binarized layer is required".into()));
        }
        mismatch(self.input.outputs(), self.input.bias.len())?;
        mismatch(self.input.outputs(), self.input_bn.dim())?;
        let mut prev = self.input.outputs();
        for b in &self.binary {
            mismatch(prev, b.dense.inputs())?;
            mismatch(b.dense.outputs(), b.bn.dim())?;
            prev = b.dense.outputs();
        }
        mismatch(prev, self.last.inputs())?;
        mismatch(self.last.outputs(), self.last.bias.len())?;
        mismatch(self.last.outputs(), self.last_bn.dim())?;
        mismatch(self.last.outputs(), self.output.inputs())?;
        mismatch(2, self.output.outputs())?;
        mismatch(2, self.output.bias.len())
    }

    pub fn input_width(&self) -> usize {
        self.input.inputs()
    }

    pub fn arch(&self) -> LiteArch {
        LiteArch {
            input_width: self.input.outputs(),
            binary_widths: self.binary.iter().map(|b| b.dense.outputs()).collect(),
            last_width: self.last.outputs(),
            dropout: self.dropout,
        }
    }

    pub fn is_packed(&self) -> bool {
        self.binary.iter().all(|b| b.dense.packed.is_some())
    }

    /// Rounds the float parts to `f32` and packs the binary layers, making
    /// the in-memory model identical to its serialized form.
    pub fn finalize(&mut self) {
        self.input.round_to_f32();
        self.input_bn.round_to_f32();
        for b in &mut self.binary {
            b.dense.pack();
            b.bn.round_to_f32();
        }
        self.last.round_to_f32();
        self.last_bn.round_to_f32();
        self.output.round_to_f32();
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(Error::DimensionMismatch {
                expected: self.input_width(),
                got: x.cols(),
            });
        }
        Ok(())
    }

    fn head(&self, binary_out: &Matrix) -> Matrix {
        let mut h = self.last_bn.forward_infer(&self.last.forward(binary_out));
        h.map_inplace(hardtanh);
        softmax_rows(&self.output.forward(&h))
    }

    fn input_signs(&self, x: &Matrix) -> Matrix {
        sign_matrix(&self.input_bn.forward_infer(&self.input.forward(x)))
    }

    /// Inference with the binary layers evaluated as ±1 floating-point
    /// matrix products.
    pub fn forward_reference(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut a = self.input_signs(x);
        for b in &self.binary {
            let mut z = Matrix::zeros(a.rows(), b.dense.outputs());
            gemm(1.0, &a, false, &b.dense.signs(), true, 0.0, &mut z);
            a = sign_matrix(&b.bn.forward_infer(&z));
        }
        Ok(self.head(&a))
    }

    /// Inference with the binary layers evaluated by XNOR and popcount.
    pub fn infer_bitpacked(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut layer_words = Vec::with_capacity(self.binary.len());
        for (i, b) in self.binary.iter().enumerate() {
            layer_words.push(b.dense.packed.as_ref().ok_or(Error::NotPacked(i))?.words());
        }
        let mut a = self.input_signs(x);
        for (b, weights) in self.binary.iter().zip(&layer_words) {
            let width = b.dense.inputs();
            let act = PackedBits::from_signs(a.rows(), width, a.as_slice())?.words();
            let per_row = width.div_ceil(64);
            let mut z = Matrix::zeros(a.rows(), b.dense.outputs());
            for r in 0..a.rows() {
                let row = &act[r * per_row..(r + 1) * per_row];
                for (o, out) in z.row_mut(r).iter_mut().enumerate() {
                    *out = xnor_dot(row, &weights[o * per_row..(o + 1) * per_row], width) as f64;
                }
            }
            a = sign_matrix(&b.bn.forward_infer(&z));
        }
        Ok(self.head(&a))
    }

    pub fn binary_payload_bytes(&self) -> usize {
        self.binary.iter().map(|b| b.dense.payload_bytes()).sum()
    }

    fn dropout_mask(&self, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if self.dropout == 0.0 {
            return vec![1.0; rows * cols];
        }
        let keep = 1.0 / (1.0 - self.dropout);
        (0..rows * cols)
            .map(|_| if rng.random::<f64>() < self.dropout { 0.0 } else { keep })
            .collect()
    }
}

impl Network for BnnClassifier {
    type Cache = BnnCache;

    fn input_width(&self) -> usize {
        BnnClassifier::input_width(self)
    }

    fn forward_train(&mut self, x: &Matrix, rng: &mut ChaCha8Rng) -> (Matrix, BnnCache) {
        let (input_u, input_bn) = self.input_bn.forward_train(&self.input.forward(x));
        let mut a = sign_matrix(&input_u);
        let n = self.binary.len();
        let (mut block_inputs, mut block_u, mut block_bn) =
            (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for b in &mut self.binary {
            let mut z = Matrix::zeros(a.rows(), b.dense.outputs());
            gemm(1.0, &a, false, &b.dense.signs(), true, 0.0, &mut z);
            let (u, cache) = b.bn.forward_train(&z);
            block_inputs.push(a);
            a = sign_matrix(&u);
            block_u.push(u);
            block_bn.push(cache);
        }
        let mask = self.dropout_mask(a.rows(), a.cols(), rng);
        for (v, m) in a.as_mut_slice().iter_mut().zip(&mask) {
            *v *= m;
        }
        let (last_u, last_bn) = self.last_bn.forward_train(&self.last.forward(&a));
        let mut last_h = last_u.clone();
        last_h.map_inplace(hardtanh);
        let probs = softmax_rows(&self.output.forward(&last_h));
        let cache = BnnCache {
            x: x.clone(),
            input_u,
            input_bn,
            block_inputs,
            block_u,
            block_bn,
            mask,
            last_in: a,
            last_u,
            last_bn,
            last_h,
        };
        (probs, cache)
    }

    fn backward(&self, cache: &BnnCache, dlogits: &Matrix) -> Vec<Vec<f64>> {
        let out = self.output.backward(&cache.last_h, dlogits, true);
        let mut dh = out.input.expect("input gradient");
        for (g, u) in dh.as_mut_slice().iter_mut().zip(cache.last_u.as_slice()) {
            *g *= hardtanh_grad(*u);
        }
        let (dz, last_gamma, last_beta) = self.last_bn.backward(&cache.last_bn, &dh);
        let last = self.last.backward(&cache.last_in, &dz, true);
        let mut da = last.input.expect("input gradient");
        for (g, m) in da.as_mut_slice().iter_mut().zip(&cache.mask) {
            *g *= m;
        }

        let mut per_block = Vec::with_capacity(self.binary.len());
        for (k, b) in self.binary.iter().enumerate().rev() {
            let du = ste(da, &cache.block_u[k]);
            let (dz, dgamma, dbeta) = b.bn.backward(&cache.block_bn[k], &du);
            let input = &cache.block_inputs[k];
            let mut dw = Matrix::zeros(b.dense.outputs(), b.dense.inputs());
            gemm(1.0, &dz, true, input, false, 0.0, &mut dw);
            let mut dx = Matrix::zeros(input.rows(), b.dense.inputs());
            gemm(1.0, &dz, false, &b.dense.signs(), false, 0.0, &mut dx);
            da = dx;
            per_block.push([dw.into_vec(), dgamma, dbeta]);
        }

        let du = ste(da, &cache.input_u);
        let (dz, in_gamma, in_beta) = self.input_bn.backward(&cache.input_bn, &du);
        let input = self.input.backward(&cache.x, &dz, false);

        let mut grads = Vec::with_capacity(3 * self.binary.len() + 10);
        grads.extend([input.weights.into_vec(), input.bias, in_gamma, in_beta]);
        for block in per_block.into_iter().rev() {
            grads.extend(block);
        }
        grads.extend([last.weights.into_vec(), last.bias, last_gamma, last_beta]);
        grads.extend([out.weights.into_vec(), out.bias]);
        grads
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(3 * self.binary.len() + 10);
        out.push(self.input.weights.as_mut_slice());
        out.push(&mut self.input.bias);
        out.push(&mut self.input_bn.gamma);
        out.push(&mut self.input_bn.beta);
        for b in &mut self.binary {
            b.dense.packed = None;
            out.push(b.dense.latent.as_mut_slice());
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(self.last.weights.as_mut_slice());
        out.push(&mut self.last.bias);
        out.push(&mut self.last_bn.gamma);
        out.push(&mut self.last_bn.beta);
        out.push(self.output.weights.as_mut_slice());
        out.push(&mut self.output.bias);
        out
    }

    fn after_step(&mut self) {
        for b in &mut self.binary {
            b.dense.clip_latent();
        }
    }
}

/// Trains from a fresh initialization seeded by `cfg.seed`, then packs.
/// Returns the model and the per-epoch loss history.
pub fn train_bnn(
    x: &Matrix,
    labels: &[u8],
    weights: &[f64],
    arch: &LiteArch,
    cfg: &TrainConfig,
) -> Result<(BnnClassifier, Vec<f64>)> {
    let mut model = BnnClassifier::new(x.cols(), arch, cfg.seed)?;
    let history = fit(&mut model, x, labels, weights, cfg)?;
    model.finalize();
    Ok((model, history))
}
