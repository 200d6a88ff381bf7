//! A trained detector: encoding parameters, feature scaler and classifier.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bnn::BnnClassifier;
use crate::encoding::{concat_features, encode_window, FeatureScaler, FeatureVector, HistogramSpec, CARRIAGE_DIM};
use crate::linalg::Matrix;
use crate::nn::{predict, MlpClassifier};
use crate::simulator::ImuWindow;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Classifier {
    Full(MlpClassifier),
    Lite(BnnClassifier),
}

impl Classifier {
    pub fn input_width(&self) -> usize {
        match self {
            Self::Full(m) => m.input_width(),
            Self::Lite(m) => m.input_width(),
        }
    }

    /// Inference-mode probabilities; the binarized classifier runs bit-packed.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Self::Full(m) => m.forward(x),
            Self::Lite(m) => m.infer_bitpacked(x),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Full(_) => "full",
            Self::Lite(_) => "lite",
        }
    }
}

/// Decision for one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub decision: u8,
    /// Probability of the proximity class.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximityModel {
    pub histogram: HistogramSpec,
    pub scaler: FeatureScaler,
    pub classifier: Classifier,
}

impl ProximityModel {
    pub fn new(histogram: HistogramSpec, scaler: FeatureScaler, classifier: Classifier) -> Result<Self> {
        histogram.validate()?;
        if scaler.dim() != CARRIAGE_DIM || scaler.std.len() != CARRIAGE_DIM {
            return Err(Error::DimensionMismatch {
                expected: CARRIAGE_DIM,
                got: scaler.dim(),
            });
        }
        let width = histogram.bins() + CARRIAGE_DIM;
        if classifier.input_width() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: classifier.input_width(),
            });
        }
        Ok(Self {
            histogram,
            scaler,
            classifier,
        })
    }

    pub fn encode(&self, rssi: &[f64], imu: &ImuWindow) -> Result<FeatureVector> {
        let (h, c) = encode_window(rssi, imu, &self.histogram)?;
        concat_features(&h, &c, &self.scaler)
    }

    /// Decisions for rows that are already encoded and scaled.
    pub fn infer_features(&self, x: &Matrix) -> Result<Vec<Inference>> {
        let probs = self.classifier.predict_proba(x)?;
        Ok((0..probs.rows())
            .map(|r| Inference {
                decision: predict(probs.row(r)),
                probability: probs.get(r, 1),
            })
            .collect())
    }

    pub fn infer(&self, rssi: &[f64], imu: &ImuWindow) -> Result<Inference> {
        let f = self.encode(rssi, imu)?;
        let x = Matrix::from_vec(1, f.len(), f.into_vec())?;
        Ok(self.infer_features(&x)?[0])
    }
}
