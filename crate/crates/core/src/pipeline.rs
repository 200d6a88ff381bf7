//! Dataset encoding, training and evaluation of complete detectors.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bnn::{train_bnn, LiteArch};
use crate::encoding::{encode_window, FeatureScaler, HistogramSpec};
use crate::eval::{evaluate, ldpl_detect, ldpl_fit, Evaluation, LdplModel};
use crate::kmm::{compute_sample_weights, KmmConfig, SampleWeights};
use crate::linalg::Matrix;
use crate::model::{Classifier, ProximityModel};
use crate::nn::{fit, MlpClassifier, TrainConfig, FULL_WIDTHS};
use crate::simulator::SampleRecord;
use crate::{Error, Result};

/// Unscaled per-window encodings.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub histograms: Vec<Vec<f64>>,
    pub carriage: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows `[histogram | standardized carriage]`.
    pub fn feature_matrix(&self, scaler: &FeatureScaler) -> Result<Matrix> {
        let mut rows = Vec::with_capacity(self.len());
        for (h, c) in self.histograms.iter().zip(&self.carriage) {
            let mut row = h.clone();
            row.extend(scaler.transform(c)?);
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::EmptyGroup("dataset is empty"));
        }
        Matrix::from_rows(&rows)
    }

    pub fn scaled_carriage(&self, scaler: &FeatureScaler) -> Result<Vec<Vec<f64>>> {
        self.carriage.iter().map(|c| scaler.transform(c)).collect()
    }
}

pub fn encode_records(records: &[SampleRecord], spec: &HistogramSpec) -> Result<EncodedDataset> {
    spec.validate()?;
    let mut out = EncodedDataset {
        histograms: Vec::with_capacity(records.len()),
        carriage: Vec::with_capacity(records.len()),
        labels: Vec::with_capacity(records.len()),
    };
    for r in records {
        let (h, c) = encode_window(&r.rssi, &r.imu, spec)?;
        out.histograms.push(h.bins);
        out.carriage.push(c.into_vec());
        out.labels.push(r.proximity);
    }
    Ok(out)
}

/// Scaler fitted on `carriage` with statistics rounded to 32-bit floats,
/// so a reloaded model transforms exactly as the trained one did.
pub fn fit_scaler(carriage: &[Vec<f64>]) -> Result<FeatureScaler> {
    let mut scaler = FeatureScaler::fit(carriage)?;
    scaler.round_to_f32();
    Ok(scaler)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Architecture {
    Full { widths: Vec<usize> },
    Lite(LiteArch),
}

impl Default for Architecture {
    fn default() -> Self {
        Self::Full {
            widths: FULL_WIDTHS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub architecture: Architecture,
    /// Reweight positives by kernel mean matching before training.
    pub regularize: bool,
    pub kmm: KmmConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: ProximityModel,
    pub weights: SampleWeights,
    pub history: Vec<f64>,
}

/// Labels must contain both classes; the error names the missing one.
pub fn check_labels(labels: &[u8]) -> Result<()> {
    if !labels.contains(&1) {
        return Err(Error::SingleLabel { missing: 1 });
    }
    if !labels.contains(&0) {
        return Err(Error::SingleLabel { missing: 0 });
    }
    Ok(())
}

pub fn sample_weights(data: &EncodedDataset, scaler: &FeatureScaler, opts: &TrainOptions) -> Result<SampleWeights> {
    check_labels(&data.labels)?;
    if opts.regularize {
        compute_sample_weights(&data.scaled_carriage(scaler)?, &data.labels, &opts.kmm)
    } else {
        Ok(SampleWeights::uniform(data.len()))
    }
}

/// Trains with precomputed sample weights.
pub fn train_with_weights(
    data: &EncodedDataset,
    spec: &HistogramSpec,
    scaler: FeatureScaler,
    weights: SampleWeights,
    opts: &TrainOptions,
) -> Result<TrainedModel> {
    check_labels(&data.labels)?;
    if weights.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: weights.len(),
        });
    }
    let x = data.feature_matrix(&scaler)?;
    let (classifier, history) = match &opts.architecture {
        Architecture::Full { widths } => {
            let mut net = MlpClassifier::new(x.cols(), widths, opts.train.seed)?;
            let history = fit(&mut net, &x, &data.labels, &weights.weights, &opts.train)?;
            net.round_to_f32();
            (Classifier::Full(net), history)
        }
        Architecture::Lite(arch) => {
            let (net, history) = train_bnn(&x, &data.labels, &weights.weights, arch, &opts.train)?;
            (Classifier::Lite(net), history)
        }
    };
    Ok(TrainedModel {
        model: ProximityModel::new(*spec, scaler, classifier)?,
        weights,
        history,
    })
}

pub fn train_model(data: &EncodedDataset, spec: &HistogramSpec, opts: &TrainOptions) -> Result<TrainedModel> {
    check_labels(&data.labels)?;
    let scaler = fit_scaler(&data.carriage)?;
    let weights = sample_weights(data, &scaler, opts)?;
    train_with_weights(data, spec, scaler, weights, opts)
}

pub fn evaluate_model(model: &ProximityModel, data: &EncodedDataset) -> Result<Evaluation> {
    let x = data.feature_matrix(&model.scaler)?;
    let decisions: Vec<u8> = model.infer_features(&x)?.iter().map(|i| i.decision).collect();
    let rows: Vec<usize> = (0..decisions.len()).collect();
    evaluate(&mut |&r: &usize| Ok(decisions[r]), &rows, &data.labels)
}

/// `(mean RSSI, distance)` for every record.
pub fn ldpl_pairs(records: &[SampleRecord]) -> Result<Vec<(f64, f64)>> {
    records
        .iter()
        .map(|r| {
            if r.rssi.is_empty() {
                return Err(Error::EmptyWindow("RSSI window"));
            }
            Ok((r.rssi.iter().sum::<f64>() / r.rssi.len() as f64, r.distance))
        })
        .collect()
}

pub fn train_ldpl(records: &[SampleRecord], fixed_tx: Option<f64>) -> Result<LdplModel> {
    ldpl_fit(&ldpl_pairs(records)?, fixed_tx)
}

pub fn evaluate_ldpl(model: &LdplModel, records: &[SampleRecord], threshold: f64) -> Result<Evaluation> {
    let labels: Vec<u8> = records.iter().map(|r| r.proximity).collect();
    evaluate(&mut |r: &SampleRecord| ldpl_detect(&r.rssi, model, threshold), records, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate_dataset, SimConfig};
    use alloc::vec;

    fn small_options(arch: Architecture, regularize: bool) -> TrainOptions {
        TrainOptions {
            architecture: arch,
            regularize,
            kmm: KmmConfig::default(),
            train: TrainConfig {
                epochs: 5,
                seed: 1,
                ..TrainConfig::default()
            },
        }
    }

    #[test]
    fn trained_models_reproduce_and_accept_raw_windows() {
        let records = generate_dataset(&SimConfig::default().with_total_records(120)).unwrap();
        let spec = HistogramSpec::default();
        let data = encode_records(&records, &spec).unwrap();
        let opts = small_options(Architecture::Full { widths: vec![16, 16] }, true);
        let a = train_model(&data, &spec, &opts).unwrap();
        let b = train_model(&data, &spec, &opts).unwrap();
        assert_eq!(a, b);
        assert!(!a.weights.is_uniform());
        let direct = a.model.infer(&records[0].rssi, &records[0].imu).unwrap();
        let batch = a.model.infer_features(&data.feature_matrix(&a.model.scaler).unwrap()).unwrap();
        assert_eq!(direct, batch[0]);
        let eval = evaluate_model(&a.model, &data).unwrap();
        assert_eq!(eval.decisions.len(), 120);
    }

    #[test]
    fn lite_models_train_end_to_end() {
        let records = generate_dataset(&SimConfig::default().with_total_records(90)).unwrap();
        let spec = HistogramSpec::default();
        let data = encode_records(&records, &spec).unwrap();
        let arch = LiteArch {
            input_width: 8,
            binary_widths: vec![32],
            last_width: 4,
            dropout: 0.2,
        };
        let t = train_model(&data, &spec, &small_options(Architecture::Lite(arch), false)).unwrap();
        assert!(t.weights.is_uniform());
        assert_eq!(t.model.classifier.kind(), "lite");
        evaluate_model(&t.model, &data).unwrap();
    }

    #[test]
    fn single_label_training_data_is_rejected() {
        let mut records = generate_dataset(&SimConfig::default().with_total_records(12)).unwrap();
        records.retain(|r| r.proximity == 0);
        let spec = HistogramSpec::default();
        let data = encode_records(&records, &spec).unwrap();
        let opts = small_options(Architecture::Full { widths: vec![4] }, false);
        assert_eq!(train_model(&data, &spec, &opts), Err(Error::SingleLabel { missing: 1 }));
    }

    #[test]
    fn ldpl_baseline_runs_on_simulated_data() {
        let records = generate_dataset(&SimConfig::default().with_total_records(300)).unwrap();
        let m = train_ldpl(&records, None).unwrap();
        assert!(m.exponent > 1.0 && m.exponent < 4.0, "{m:?}");
        let eval = evaluate_ldpl(&m, &records, 2.0).unwrap();
        assert!(eval.metrics.f1 > 0.5);
    }
}
