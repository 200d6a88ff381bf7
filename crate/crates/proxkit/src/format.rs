//! The `PRXM` binary model format.
//!
//! ```text
//! magic      "PRXM"
//! version    u16
//! arch       u8            0 = full precision, 1 = binarized
//! scaler     phi_min f32, phi_max f32, delta f32,
//!            bins u32, carriage_dim u32, mean [f32; dim], std [f32; dim]
//! layers     u32 count, then per layer a u8 tag and its record:
//!   1 DENSE_F32  out u32, in u32, weights [f32; out·in] row-major, bias [f32; out]
//!   2 DENSE_BIN  out u32, in u32, packed sign rows [u8; out·⌈in/8⌉]
//!   3 BN         dim u32, epsilon f32, momentum f32,
//!                gamma, beta, running_mean, running_var [f32; dim] each
//! crc32      u32 over every preceding byte
//! ```
//!
//! Everything is little-endian. The full-precision model is stored as
//! `(DENSE_F32, BN)` per hidden layer then the output `DENSE_F32`; the
//! binarized model as input `DENSE_F32, BN`, `(DENSE_BIN, BN)` per binary
//! layer, last hidden `DENSE_F32, BN`, output `DENSE_F32`.

use proxkit_core::bnn::{BinaryBlock, BinaryDense, BnnClassifier, PackedBits};
use proxkit_core::encoding::{FeatureScaler, HistogramSpec};
use proxkit_core::linalg::Matrix;
use proxkit_core::model::{Classifier, ProximityModel};
use proxkit_core::nn::{BatchNorm, Dense, HiddenBlock, MlpClassifier};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"PRXM";
pub const VERSION: u16 = 1;
pub const ARCH_FULL: u8 = 0;
pub const ARCH_LITE: u8 = 1;
pub const TAG_DENSE_F32: u8 = 1;
pub const TAG_DENSE_BIN: u8 = 2;
pub const TAG_BN: u8 = 3;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("dimension fits in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f32(&mut self, v: f64) {
        self.0.extend_from_slice(&(v as f32).to_le_bytes());
    }

    fn f32s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f32(v);
        }
    }

    fn dense(&mut self, d: &Dense) {
        self.u8(TAG_DENSE_F32);
        self.u32(d.outputs());
        self.u32(d.inputs());
        self.f32s(d.weights.as_slice());
        self.f32s(&d.bias);
    }

    fn binary(&mut self, d: &PackedBits) {
        self.u8(TAG_DENSE_BIN);
        self.u32(d.rows());
        self.u32(d.cols());
        self.0.extend_from_slice(d.as_bytes());
    }

    fn bn(&mut self, bn: &BatchNorm) {
        self.u8(TAG_BN);
        self.u32(bn.dim());
        self.f32(bn.epsilon);
        self.f32(bn.momentum);
        for v in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
            self.f32s(v);
        }
    }
}

pub fn encode(model: &ProximityModel) -> CliResult<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u16(VERSION);
    w.u8(match model.classifier {
        Classifier::Full(_) => ARCH_FULL,
        Classifier::Lite(_) => ARCH_LITE,
    });
    let h = &model.histogram;
    w.f32(h.phi_min);
    w.f32(h.phi_max);
    w.f32(h.delta);
    w.u32(h.bins());
    w.u32(model.scaler.dim());
    w.f32s(&model.scaler.mean);
    w.f32s(&model.scaler.std);
    match &model.classifier {
        Classifier::Full(m) => {
            w.u32(2 * m.blocks.len() + 1);
            for b in &m.blocks {
                w.dense(&b.dense);
                w.bn(&b.bn);
            }
            w.dense(&m.output);
        }
        Classifier::Lite(m) => {
            w.u32(2 * m.binary.len() + 5);
            w.dense(&m.input);
            w.bn(&m.input_bn);
            for (i, b) in m.binary.iter().enumerate() {
                let packed = b.dense.packed().ok_or_else(|| {
                    CliError::Data(format!("model: binary layer {i} is not packed"))
                })?;
                w.binary(packed);
                w.bn(&b.bn);
            }
            w.dense(&m.last);
            w.bn(&m.last_bn);
            w.dense(&m.output);
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    Ok(w.0)
}

/// Serialized size without building the byte buffer.
pub fn encoded_len(model: &ProximityModel) -> CliResult<usize> {
    encode(model).map(|b| b.len())
}

fn corrupt(msg: impl Into<String>) -> CliError {
    CliError::Data(format!("model file: {}", msg.into()))
}

enum Layer {
    Dense(Dense),
    Binary(PackedBits),
    Norm(BatchNorm),
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> CliResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> CliResult<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> CliResult<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f32(&mut self) -> CliResult<f64> {
        let v = f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes"));
        Ok(f64::from(v))
    }

    fn f32s(&mut self, n: usize) -> CliResult<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| corrupt("dimension overflow"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect())
    }

    fn dims(&mut self) -> CliResult<(usize, usize)> {
        let out = self.u32()?;
        let inp = self.u32()?;
        if out == 0 || inp == 0 {
            return Err(corrupt("zero layer dimension"));
        }
        out.checked_mul(inp).ok_or_else(|| corrupt("dimension overflow"))?;
        Ok((out, inp))
    }

    fn layer(&mut self) -> CliResult<Layer> {
        match self.u8()? {
            TAG_DENSE_F32 => {
                let (out, inp) = self.dims()?;
                let weights = Matrix::from_vec(out, inp, self.f32s(out * inp)?).map_err(|e| corrupt(e.to_string()))?;
                let bias = self.f32s(out)?;
                Ok(Layer::Dense(Dense { weights, bias }))
            }
            TAG_DENSE_BIN => {
                let (out, inp) = self.dims()?;
                let payload = self.take(PackedBits::payload_len(out, inp))?.to_vec();
                let packed = PackedBits::from_bytes(out, inp, payload).map_err(|e| corrupt(e.to_string()))?;
                Ok(Layer::Binary(packed))
            }
            TAG_BN => {
                let dim = self.u32()?;
                let epsilon = self.f32()?;
                let momentum = self.f32()?;
                let mut bn = BatchNorm::new(dim);
                bn.epsilon = epsilon;
                bn.momentum = momentum;
                bn.gamma = self.f32s(dim)?;
                bn.beta = self.f32s(dim)?;
                bn.running_mean = self.f32s(dim)?;
                bn.running_var = self.f32s(dim)?;
                Ok(Layer::Norm(bn))
            }
            tag => Err(corrupt(format!("unknown layer tag {tag}"))),
        }
    }
}

fn expect_dense(layer: Option<Layer>) -> CliResult<Dense> {
    match layer {
        Some(Layer::Dense(d)) => Ok(d),
        _ => Err(corrupt("expected a DENSE_F32 layer")),
    }
}

fn expect_bn(layer: Option<Layer>) -> CliResult<BatchNorm> {
    match layer {
        Some(Layer::Norm(bn)) => Ok(bn),
        _ => Err(corrupt("expected a BN layer")),
    }
}

pub fn decode(bytes: &[u8]) -> CliResult<ProximityModel> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic, not a PRXM model"));
    }
    if bytes.len() < 4 + 2 + 1 + 4 {
        return Err(corrupt("truncated header"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch (truncated or damaged file)"));
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u16()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let arch = r.u8()?;
    let histogram = HistogramSpec {
        phi_min: r.f32()?,
        phi_max: r.f32()?,
        delta: r.f32()?,
    };
    histogram.validate().map_err(|e| corrupt(e.to_string()))?;
    let bins = r.u32()?;
    if bins != histogram.bins() {
        return Err(corrupt(format!("header says {bins} bins, encoding gives {}", histogram.bins())));
    }
    let dim = r.u32()?;
    let scaler = FeatureScaler {
        mean: r.f32s(dim)?,
        std: r.f32s(dim)?,
    };
    let count = r.u32()?;
    let mut layers = Vec::new();
    for _ in 0..count {
        layers.push(r.layer()?);
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after the last layer"));
    }
    let mut it = layers.into_iter();
    let classifier = match arch {
        ARCH_FULL => {
            if count % 2 != 1 {
                return Err(corrupt("full-precision model needs (dense, bn) pairs and an output layer"));
            }
            let mut blocks = Vec::with_capacity(count / 2);
            for _ in 0..count / 2 {
                blocks.push(HiddenBlock {
                    dense: expect_dense(it.next())?,
                    bn: expect_bn(it.next())?,
                });
            }
            let output = expect_dense(it.next())?;
            Classifier::Full(MlpClassifier::from_parts(blocks, output).map_err(|e| corrupt(e.to_string()))?)
        }
        ARCH_LITE => {
            if count < 7 || count % 2 != 1 {
                return Err(corrupt("binarized model has the wrong number of layers"));
            }
            let input = expect_dense(it.next())?;
            let input_bn = expect_bn(it.next())?;
            let mut binary = Vec::with_capacity((count - 5) / 2);
            for _ in 0..(count - 5) / 2 {
                let packed = match it.next() {
                    Some(Layer::Binary(p)) => p,
                    _ => return Err(corrupt("expected a DENSE_BIN layer")),
                };
                binary.push(BinaryBlock {
                    dense: BinaryDense::from_packed(packed),
                    bn: expect_bn(it.next())?,
                });
            }
            let model = BnnClassifier {
                input,
                input_bn,
                binary,
                last: expect_dense(it.next())?,
                last_bn: expect_bn(it.next())?,
                output: expect_dense(it.next())?,
                dropout: 0.0,
            };
            model.check_shapes().map_err(|e| corrupt(e.to_string()))?;
            Classifier::Lite(model)
        }
        other => return Err(corrupt(format!("unknown architecture byte {other}"))),
    };
    ProximityModel::new(histogram, scaler, classifier).map_err(|e| corrupt(e.to_string()))
}

/// True when `bytes` starts with the model magic.
pub fn is_prxm(bytes: &[u8]) -> bool {
    bytes.starts_with(MAGIC)
}
