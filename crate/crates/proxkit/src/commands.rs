//! Subcommand implementations. Each returns the text to print on success.

use std::path::Path;

use proxkit_core::encoding::{encode_window, CARRIAGE_DIM};
use proxkit_core::eval::{Evaluation, LdplModel, Metrics};
use proxkit_core::kmm::{compute_sample_weights, SampleWeights};
use proxkit_core::model::{Classifier, ProximityModel};
use proxkit_core::pipeline::{
    check_labels, encode_records, evaluate_ldpl, evaluate_model, fit_scaler, sample_weights, train_ldpl,
    train_with_weights,
};
use proxkit_core::simulator::{generate_dataset, proximity_label, ImuWindow, SampleRecord};
use serde::{Deserialize, Serialize};

use crate::config::{ArchKind, PipelineConfig};
use crate::error::{tagged, CliError, CliResult};
use crate::format;
use crate::io::{read_bytes, read_dataset, read_jsonl, to_jsonl, write_bytes, FeatureRow, WeightRow};
use crate::manifest::{Artifact, RunManifest, WeightStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TrainArch {
    Full,
    Lite,
    Ldpl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DetectorKind {
    Ldpl,
    Mlp,
    Lite,
}

impl DetectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ldpl => "ldpl",
            Self::Mlp => "mlp",
            Self::Lite => "lite",
        }
    }
}

/// Baseline model file, stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename = "ldpl")]
pub struct LdplFile {
    pub tx: f64,
    pub exponent: f64,
}

#[allow(clippy::large_enum_variant)]
pub enum LoadedModel {
    Classifier(ProximityModel),
    Ldpl(LdplModel),
}

impl LoadedModel {
    pub fn detector(&self) -> DetectorKind {
        match self {
            Self::Classifier(m) => match m.classifier {
                Classifier::Full(_) => DetectorKind::Mlp,
                Classifier::Lite(_) => DetectorKind::Lite,
            },
            Self::Ldpl(_) => DetectorKind::Ldpl,
        }
    }
}

pub fn parse_model(bytes: &[u8], origin: &Path) -> CliResult<LoadedModel> {
    if format::is_prxm(bytes) {
        return format::decode(bytes)
            .map(LoadedModel::Classifier)
            .map_err(|e| CliError::Data(format!("{}: {e}", origin.display())));
    }
    match serde_json::from_slice::<LdplFile>(bytes) {
        Ok(f) => Ok(LoadedModel::Ldpl(LdplModel {
            tx: f.tx,
            exponent: f.exponent,
        })),
        Err(_) => Err(CliError::Data(format!(
            "{}: bad magic, neither a PRXM model nor an LDPL model file",
            origin.display()
        ))),
    }
}

pub fn load_model(path: &Path) -> CliResult<LoadedModel> {
    parse_model(&read_bytes(path)?, path)
}

pub fn simulate_records(cfg: &PipelineConfig) -> CliResult<Vec<SampleRecord>> {
    generate_dataset(&cfg.sim_config()).map_err(tagged("simulator"))
}

pub fn cmd_simulate(cfg: &PipelineConfig, out: &Path) -> CliResult<String> {
    let mut manifest = RunManifest::new("simulate", cfg.hash(), cfg.seed);
    let records = manifest.time("simulate", || simulate_records(cfg))?;
    let bytes = to_jsonl(&records);
    write_bytes(out, &bytes)?;
    manifest.outputs.push(Artifact::of(out, &bytes));
    manifest.write_beside(out)?;
    Ok(format!("wrote {} records to {}", records.len(), out.display()))
}

pub fn feature_rows(cfg: &PipelineConfig, records: &[SampleRecord]) -> CliResult<Vec<FeatureRow>> {
    records
        .iter()
        .map(|r| {
            let (h, c) = encode_window(&r.rssi, &r.imu, &cfg.encoding)
                .map_err(|e| tagged("encoding")(e))
                .map_err(|e| CliError::Data(format!("record {}: {e}", r.id)))?;
            let features = h.bins.iter().chain(c.as_slice()).map(|&v| v as f32).collect();
            Ok(FeatureRow {
                id: r.id.clone(),
                label: r.proximity,
                features,
            })
        })
        .collect()
}

pub fn cmd_featurize(cfg: &PipelineConfig, data: &Path, out: &Path) -> CliResult<String> {
    let mut manifest = RunManifest::new("featurize", cfg.hash(), cfg.seed);
    let records = read_dataset(data)?;
    let rows = manifest.time("featurize", || feature_rows(cfg, &records))?;
    let bytes = to_jsonl(&rows);
    write_bytes(out, &bytes)?;
    manifest.inputs.push(Artifact::of(data, &read_bytes(data)?));
    manifest.outputs.push(Artifact::of(out, &bytes));
    manifest.write_beside(out)?;
    Ok(format!("wrote {} feature rows to {}", rows.len(), out.display()))
}

/// KMM weights from feature rows; the last `CARRIAGE_DIM` columns are the
/// carriage features and are standardized before the kernel is applied.
pub fn weights_from_features(cfg: &PipelineConfig, rows: &[FeatureRow]) -> CliResult<SampleWeights> {
    let mut carriage = Vec::with_capacity(rows.len());
    for row in rows {
        if row.features.len() < CARRIAGE_DIM {
            return Err(CliError::Data(format!(
                "feature row {} has {} values, fewer than the {CARRIAGE_DIM} carriage features",
                row.id,
                row.features.len()
            )));
        }
        let tail = &row.features[row.features.len() - CARRIAGE_DIM..];
        carriage.push(tail.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>());
    }
    let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
    check_labels(&labels).map_err(tagged("kmm"))?;
    let scaler = fit_scaler(&carriage).map_err(tagged("kmm"))?;
    let scaled: Vec<Vec<f64>> = carriage
        .iter()
        .map(|c| scaler.transform(c))
        .collect::<Result<_, _>>()
        .map_err(tagged("kmm"))?;
    compute_sample_weights(&scaled, &labels, &cfg.kmm_config()).map_err(tagged("kmm"))
}

pub fn cmd_kmm_weights(cfg: &PipelineConfig, features: &Path, out: &Path) -> CliResult<String> {
    let mut manifest = RunManifest::new("kmm-weights", cfg.hash(), cfg.seed);
    let rows: Vec<FeatureRow> = read_jsonl(features)?;
    let weights = manifest.time("kmm", || weights_from_features(cfg, &rows))?;
    let out_rows: Vec<WeightRow> = rows
        .iter()
        .zip(&weights.weights)
        .map(|(r, &weight)| WeightRow {
            id: r.id.clone(),
            weight,
        })
        .collect();
    let bytes = to_jsonl(&out_rows);
    write_bytes(out, &bytes)?;
    let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
    manifest.weights = Some(WeightStats::of(&weights, &labels));
    manifest.inputs.push(Artifact::of(features, &read_bytes(features)?));
    manifest.outputs.push(Artifact::of(out, &bytes));
    manifest.write_beside(out)?;
    let mut msg = format!("wrote {} weights to {}", out_rows.len(), out.display());
    if !weights.converged {
        msg.push_str("\nwarning: kmm solver hit max_iters; using the best iterate");
    }
    Ok(msg)
}

fn weights_for_records(path: &Path, records: &[SampleRecord]) -> CliResult<SampleWeights> {
    let rows: Vec<WeightRow> = read_jsonl(path)?;
    if rows.len() != records.len() {
        return Err(CliError::Data(format!(
            "{}: {} weights for {} records",
            path.display(),
            rows.len(),
            records.len()
        )));
    }
    for (i, (w, r)) in rows.iter().zip(records).enumerate() {
        if w.id != r.id {
            return Err(CliError::Data(format!(
                "{}: line {} has id {:?}, dataset has {:?}",
                path.display(),
                i + 1,
                w.id,
                r.id
            )));
        }
    }
    Ok(SampleWeights {
        weights: rows.into_iter().map(|w| w.weight).collect(),
        converged: true,
    })
}

pub struct TrainRequest<'a> {
    pub arch: TrainArch,
    pub regularize: bool,
    pub weights: Option<&'a Path>,
    pub fix_tx: bool,
}

/// Trains and serializes a model. Returns the file bytes and the manifest.
pub fn train_bytes(
    cfg: &PipelineConfig,
    records: &[SampleRecord],
    req: &TrainRequest<'_>,
    manifest: &mut RunManifest,
) -> CliResult<Vec<u8>> {
    let labels: Vec<u8> = records.iter().map(|r| r.proximity).collect();
    check_labels(&labels).map_err(tagged("train"))?;
    let arch = match req.arch {
        TrainArch::Ldpl => {
            let fixed = req.fix_tx.then_some(cfg.simulation.tx_power);
            let m = manifest.time("fit", || train_ldpl(records, fixed)).map_err(tagged("ldpl"))?;
            let file = LdplFile {
                tx: m.tx,
                exponent: m.exponent,
            };
            let mut bytes = serde_json::to_vec_pretty(&file).expect("ldpl serializes");
            bytes.push(b'\n');
            return Ok(bytes);
        }
        TrainArch::Full => ArchKind::Full,
        TrainArch::Lite => ArchKind::Lite,
    };
    let opts = cfg.train_options(arch, req.regularize);
    let data = manifest
        .time("encode", || encode_records(records, &cfg.encoding))
        .map_err(tagged("encoding"))?;
    let scaler = fit_scaler(&data.carriage).map_err(tagged("encoding"))?;
    let weights = match req.weights {
        Some(path) => weights_for_records(path, records)?,
        None => manifest
            .time("kmm", || sample_weights(&data, &scaler, &opts))
            .map_err(tagged("kmm"))?,
    };
    manifest.weights = Some(WeightStats::of(&weights, &data.labels));
    let module = match arch {
        ArchKind::Full => "nn",
        ArchKind::Lite => "bnn",
    };
    let trained = manifest
        .time("train", || train_with_weights(&data, &cfg.encoding, scaler, weights, &opts))
        .map_err(tagged(module))?;
    format::encode(&trained.model)
}

pub fn cmd_train(cfg: &PipelineConfig, data: &Path, out: &Path, req: &TrainRequest<'_>) -> CliResult<String> {
    let mut manifest = RunManifest::new("train", cfg.hash(), cfg.seed);
    let data_bytes = read_bytes(data)?;
    let records = read_dataset(data)?;
    let bytes = train_bytes(cfg, &records, req, &mut manifest)?;
    write_bytes(out, &bytes)?;
    manifest.inputs.push(Artifact::of(data, &data_bytes));
    if let Some(w) = req.weights {
        manifest.inputs.push(Artifact::of(w, &read_bytes(w)?));
    }
    manifest.outputs.push(Artifact::of(out, &bytes));
    manifest.write_beside(out)?;
    Ok(format!("wrote model ({} bytes) to {}", bytes.len(), out.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub detector: String,
    pub threshold: f64,
    pub windows: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub id: String,
    pub label: u8,
    pub decision: u8,
}

/// Relabels records by `threshold` and runs the model over them.
pub fn evaluate_loaded(
    model: &LoadedModel,
    records: &[SampleRecord],
    threshold: f64,
) -> CliResult<Evaluation> {
    if !(threshold > 0.0) {
        return Err(CliError::Config("threshold must be positive".into()));
    }
    let records: Vec<SampleRecord> = records
        .iter()
        .map(|r| SampleRecord {
            proximity: proximity_label(r.distance, threshold),
            ..r.clone()
        })
        .collect();
    match model {
        LoadedModel::Ldpl(m) => evaluate_ldpl(m, &records, threshold).map_err(tagged("eval")),
        LoadedModel::Classifier(m) => {
            let data = encode_records(&records, &m.histogram).map_err(tagged("encoding"))?;
            evaluate_model(m, &data).map_err(tagged("eval"))
        }
    }
}

pub fn report_bytes(report: &MetricsReport) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(report).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

pub struct EvalRequest<'a> {
    pub threshold: f64,
    pub detector: Option<DetectorKind>,
    pub decisions: Option<&'a Path>,
    pub report: Option<&'a Path>,
}

pub fn cmd_eval(cfg: &PipelineConfig, model_path: &Path, data: &Path, req: &EvalRequest<'_>) -> CliResult<String> {
    let model = load_model(model_path)?;
    let detector = model.detector();
    if let Some(wanted) = req.detector {
        if wanted != detector {
            return Err(CliError::Config(format!(
                "--detector {} does not match {}, which holds a {} model",
                wanted.as_str(),
                model_path.display(),
                detector.as_str()
            )));
        }
    }
    let records = read_dataset(data)?;
    let evaluation = evaluate_loaded(&model, &records, req.threshold)?;
    let report = MetricsReport {
        detector: detector.as_str().to_string(),
        threshold: req.threshold,
        windows: records.len(),
        metrics: evaluation.metrics,
    };
    let bytes = report_bytes(&report);
    let mut manifest = RunManifest::new("eval", cfg.hash(), cfg.seed);
    manifest.inputs.push(Artifact::of(model_path, &read_bytes(model_path)?));
    manifest.inputs.push(Artifact::of(data, &read_bytes(data)?));
    if let Some(path) = req.decisions {
        let rows: Vec<DecisionRow> = records
            .iter()
            .zip(&evaluation.decisions)
            .map(|(r, &decision)| DecisionRow {
                id: r.id.clone(),
                label: proximity_label(r.distance, req.threshold),
                decision,
            })
            .collect();
        let decisions = to_jsonl(&rows);
        write_bytes(path, &decisions)?;
        manifest.outputs.push(Artifact::of(path, &decisions));
    }
    if let Some(path) = req.report {
        write_bytes(path, &bytes)?;
        manifest.outputs.push(Artifact::of(path, &bytes));
        manifest.write_beside(path)?;
    }
    Ok(String::from_utf8(bytes).expect("JSON is UTF-8").trim_end().to_string())
}

/// The part of a record that inference needs; other fields are ignored.
#[derive(Debug, Clone, Deserialize)]
pub struct InferRecord {
    #[serde(default)]
    pub id: String,
    pub rssi: Vec<f64>,
    pub imu: ImuWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferOutput {
    pub id: String,
    pub decision: u8,
    pub probability: f64,
}

/// Runs every JSONL record in `text` through the model.
pub fn infer_lines(model: &ProximityModel, text: &str, origin: &str) -> CliResult<Vec<InferOutput>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| CliError::Data(format!("{origin}: line {}: {msg}", i + 1));
        let record: InferRecord = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        let result = model.infer(&record.rssi, &record.imu).map_err(|e| at(e.to_string()))?;
        out.push(InferOutput {
            id: record.id,
            decision: result.decision,
            probability: result.probability,
        });
    }
    Ok(out)
}

pub fn cmd_infer(model_path: &Path, records: &Path) -> CliResult<String> {
    let model = match load_model(model_path)? {
        LoadedModel::Classifier(m) => m,
        LoadedModel::Ldpl(_) => {
            return Err(CliError::Config(format!(
                "{} is an LDPL model; infer needs a PRXM classifier",
                model_path.display()
            )))
        }
    };
    let text = std::fs::read_to_string(records).map_err(|e| CliError::input(records, e))?;
    let outputs = infer_lines(&model, &text, &records.display().to_string())?;
    let bytes = to_jsonl(&outputs);
    Ok(String::from_utf8(bytes).expect("JSON is UTF-8").trim_end().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ldpl_file_round_trips_and_is_detected() {
        let file = LdplFile {
            tx: -61.5,
            exponent: 2.25,
        };
        let bytes = serde_json::to_vec(&file).unwrap();
        assert!(String::from_utf8_lossy(&bytes).contains("\"format\":\"ldpl\""));
        match parse_model(&bytes, Path::new("m.json")).unwrap() {
            LoadedModel::Ldpl(m) => assert_eq!((m.tx, m.exponent), (-61.5, 2.25)),
            LoadedModel::Classifier(_) => panic!("expected the baseline"),
        }
    }

    #[test]
    fn unknown_bytes_are_a_data_error() {
        let e = parse_model(b"\x00\x01junk", Path::new("x.bin")).err().unwrap();
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("magic"));
    }

    #[test]
    fn weight_rows_must_follow_the_dataset() {
        let cfg = PipelineConfig {
            seed: 3,
            ..PipelineConfig::default()
        };
        let mut small = cfg.clone();
        small.set_total_records(3);
        let records = simulate_records(&small).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.jsonl");
        let mut rows: Vec<WeightRow> = records
            .iter()
            .map(|r| WeightRow {
                id: r.id.clone(),
                weight: 1.5,
            })
            .collect();
        std::fs::write(&path, to_jsonl(&rows)).unwrap();
        assert_eq!(weights_for_records(&path, &records).unwrap().weights, vec![1.5; 3]);
        rows.swap(0, 1);
        std::fs::write(&path, to_jsonl(&rows)).unwrap();
        let e = weights_for_records(&path, &records).err().unwrap();
        assert!(e.to_string().contains("line 1"), "{e}");
        std::fs::write(&path, to_jsonl(&rows[..2])).unwrap();
        assert!(weights_for_records(&path, &records).is_err());
    }

    #[test]
    fn feature_rows_hold_histogram_then_raw_carriage() {
        let mut cfg = PipelineConfig::default();
        cfg.set_total_records(3);
        let records = simulate_records(&cfg).unwrap();
        let rows = feature_rows(&cfg, &records).unwrap();
        let bins = cfg.encoding.bins();
        for (row, record) in rows.iter().zip(&records) {
            assert_eq!(row.features.len(), bins + CARRIAGE_DIM);
            let hist: f32 = row.features[..bins].iter().sum();
            assert!((hist - 1.0).abs() < 1e-5);
            assert_eq!(row.label, record.proximity);
        }
    }

    #[test]
    fn threshold_must_be_positive() {
        let model = LoadedModel::Ldpl(LdplModel {
            tx: -59.0,
            exponent: 2.0,
        });
        let e = evaluate_loaded(&model, &[], 0.0).err().unwrap();
        assert_eq!(e.exit_code(), 2);
    }
}
