use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proxkit::commands::InferOutput;
use proxkit::config::PipelineConfig;
use proxkit::manifest::RunManifest;
use proxkit_core::simulator::{
    record_rng, simulate_imu, simulate_rssi, CarriageKind, CarriageProfile, EnvironmentKind, EnvironmentProfile,
    SampleRecord, SimConfig,
};
use tempfile::TempDir;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    /// A temp dir holding `pipeline.toml` with a small, fast configuration.
    fn new(records: usize, bias: f64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig {
            seed: 21,
            ..PipelineConfig::default()
        };
        cfg.set_total_records(records);
        cfg.simulation.bias = bias;
        cfg.train.epochs = 4;
        cfg.model.full_widths = vec![32, 32];
        std::fs::write(dir.path().join("pipeline.toml"), cfg.to_toml()).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        self.run_env(args, None)
    }

    fn run_env(&self, args: &[&str], seed_env: Option<&str>) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_proxkit"));
        cmd.current_dir(self.dir.path()).env_remove("PROXKIT_SEED");
        if let Some(seed) = seed_env {
            cmd.env("PROXKIT_SEED", seed);
        }
        cmd.args(["--config", "pipeline.toml"]).args(args).output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.path(name)).unwrap()
    }

    fn manifest(&self, artifact: &str) -> RunManifest {
        let text = std::fs::read_to_string(self.path(&format!("{artifact}.manifest.json"))).unwrap();
        serde_json::from_str(&text).unwrap()
    }
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_writes_dataset_and_manifest() {
    let ws = Workspace::new(30, 0.0);
    ws.ok(&["simulate", "--out", "data.jsonl"]);
    let text = String::from_utf8(ws.read("data.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 30);
    let m = ws.manifest("data.jsonl");
    assert_eq!(m.command, "simulate");
    assert_eq!(m.seed, 21);
    assert_eq!(m.outputs.len(), 1);
    assert_eq!(m.outputs[0].bytes, text.len() as u64);
}

#[test]
fn missing_output_dir_is_an_output_error_naming_the_path() {
    let ws = Workspace::new(6, 0.0);
    let out = ws.run(&["simulate", "--out", "no/such/dir/data.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no/such/dir/data.jsonl"), "{}", stderr(&out));
}

#[test]
fn seeds_control_the_dataset() {
    let ws = Workspace::new(9, 0.0);
    ws.ok(&["simulate", "--out", "a.jsonl"]);
    ws.ok(&["simulate", "--out", "b.jsonl"]);
    assert_eq!(ws.read("a.jsonl"), ws.read("b.jsonl"));
    assert_eq!(ws.manifest("a.jsonl").outputs[0].sha256, ws.manifest("b.jsonl").outputs[0].sha256);

    assert!(ws.run_env(&["simulate", "--out", "env.jsonl"], Some("99")).status.success());
    assert_ne!(ws.read("env.jsonl"), ws.read("a.jsonl"));
    assert_eq!(ws.manifest("env.jsonl").seed, 99);
    ws.ok(&["--seed", "99", "simulate", "--out", "flag.jsonl"]);
    assert_eq!(ws.read("flag.jsonl"), ws.read("env.jsonl"));
    // The flag wins over the environment.
    assert!(ws.run_env(&["--seed", "21", "simulate", "--out", "both.jsonl"], Some("99")).status.success());
    assert_eq!(ws.read("both.jsonl"), ws.read("a.jsonl"));

    let bad = ws.run_env(&["simulate", "--out", "x.jsonl"], Some("many"));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    let ws = Workspace::new(6, 0.0);
    std::fs::write(ws.path("pipeline.toml"), "seed = 1\nnot_a_field = 3\n").unwrap();
    let out = ws.run(&["simulate", "--out", "d.jsonl"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    std::fs::write(ws.path("pipeline.toml"), "[encoding]\ndelta = 3.0\n").unwrap();
    let out = ws.run(&["simulate", "--out", "d.jsonl"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("delta"), "{}", stderr(&out));
}

#[test]
fn default_config_file_matches_built_in_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let cfg = PipelineConfig::load(&path).unwrap();
    assert_eq!(cfg, PipelineConfig::default());
}

#[test]
fn regularized_training_records_nonuniform_weights() {
    let ws = Workspace::new(150, 0.8);
    ws.ok(&["simulate", "--out", "data.jsonl"]);
    ws.ok(&["train", "--data", "data.jsonl", "--out", "reg.prxm", "--arch", "full", "--regularize"]);
    let weights = ws.manifest("reg.prxm").weights.unwrap();
    assert!(!weights.uniform);
    assert!(weights.max > weights.min);
    ws.ok(&["train", "--data", "data.jsonl", "--out", "plain.prxm", "--arch", "full"]);
    assert!(ws.manifest("plain.prxm").weights.unwrap().uniform);
}

#[test]
fn precomputed_weights_match_the_pipeline_and_train() {
    let ws = Workspace::new(90, 0.8);
    ws.ok(&["simulate", "--out", "data.jsonl"]);
    ws.ok(&["featurize", "--data", "data.jsonl", "--out", "features.jsonl"]);
    let features = String::from_utf8(ws.read("features.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(features.lines().next().unwrap()).unwrap();
    assert_eq!(first["features"].as_array().unwrap().len(), 58);
    ws.ok(&["kmm-weights", "--features", "features.jsonl", "--out", "weights.jsonl"]);
    assert!(!ws.manifest("weights.jsonl").weights.unwrap().uniform);
    ws.ok(&["train", "--data", "data.jsonl", "--out", "m.prxm", "--weights", "weights.jsonl"]);
    let m = ws.manifest("m.prxm");
    assert_eq!(m.inputs.len(), 2);
    assert!(!m.weights.unwrap().uniform);
}

#[test]
fn lite_model_fits_the_size_budget() {
    let ws = Workspace::new(60, 0.0);
    ws.ok(&["simulate", "--out", "data.jsonl"]);
    ws.ok(&["train", "--data", "data.jsonl", "--out", "lite.prxm", "--arch", "lite", "--epochs", "1"]);
    let bytes = ws.read("lite.prxm").len();
    assert!(bytes <= 350_000, "{bytes}");
    let report = ws.ok(&["eval", "--model", "lite.prxm", "--data", "data.jsonl", "--detector", "lite"]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["detector"], "lite");
}

#[test]
fn single_label_dataset_is_rejected() {
    let ws = Workspace::new(40, 0.0);
    ws.ok(&["simulate", "--out", "data.jsonl"]);
    let text = String::from_utf8(ws.read("data.jsonl")).unwrap();
    let far: String = text
        .lines()
        .filter(|l| serde_json::from_str::<SampleRecord>(l).unwrap().proximity == 0)
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(ws.path("far.jsonl"), far).unwrap();
    let out = ws.run(&["train", "--data", "far.jsonl", "--out", "m.prxm"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("single-label dataset"), "{}", stderr(&out));
    assert!(!ws.path("m.prxm").exists());
}

#[test]
fn ldpl_baseline_trains_and_evaluates() {
    let ws = Workspace::new(120, 0.0);
    ws.ok(&["simulate", "--out", "data.jsonl"]);
    ws.ok(&["train", "--data", "data.jsonl", "--out", "ldpl.json", "--arch", "ldpl"]);
    let model: serde_json::Value = serde_json::from_slice(&ws.read("ldpl.json")).unwrap();
    assert_eq!(model["format"], "ldpl");
    assert!(model["exponent"].as_f64().unwrap() > 0.0);
    ws.ok(&["train", "--data", "data.jsonl", "--out", "fixed.json", "--arch", "ldpl", "--fix-tx"]);
    let fixed: serde_json::Value = serde_json::from_slice(&ws.read("fixed.json")).unwrap();
    assert_eq!(fixed["tx"].as_f64().unwrap(), PipelineConfig::default().simulation.tx_power);

    let report = ws.ok(&[
        "eval",
        "--model",
        "ldpl.json",
        "--data",
        "data.jsonl",
        "--threshold",
        "3",
        "--decisions",
        "decisions.jsonl",
        "--out",
        "metrics.json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["detector"], "ldpl");
    assert_eq!(v["threshold"], 3.0);
    assert_eq!(v["windows"], 120);
    let ndcf = v["ndcf"].as_f64().unwrap();
    let sum = v["e_miss"].as_f64().unwrap() + v["e_fa"].as_f64().unwrap();
    assert!((ndcf - sum).abs() < 1e-12);
    assert_eq!(ws.read("metrics.json"), report.as_bytes());
    assert_eq!(ws.manifest("metrics.json").outputs.len(), 2);
    let decisions = String::from_utf8(ws.read("decisions.jsonl")).unwrap();
    assert_eq!(decisions.lines().count(), 120);

    let out = ws.run(&["eval", "--model", "ldpl.json", "--data", "data.jsonl", "--detector", "mlp"]);
    assert_eq!(out.status.code(), Some(2));
}

/// One window recorded at exactly 1 m, held in hand in a static room.
fn one_metre_record() -> String {
    let sim = SimConfig::default();
    let env = EnvironmentProfile::default_for(EnvironmentKind::Static);
    let carriage = CarriageProfile::default_for(CarriageKind::HandStatic);
    let mut rng = record_rng(77, 0);
    let rssi = simulate_rssi(1.0, sim.tx_power, &env, &carriage, sim.window_seconds, sim.rssi_rate, &mut rng).unwrap();
    let imu = simulate_imu(&carriage, sim.window_seconds, sim.imu_rate, &mut rng).unwrap();
    let record = SampleRecord {
        id: "one-metre".into(),
        environment: EnvironmentKind::Static,
        carriage: CarriageKind::HandStatic,
        distance: 1.0,
        proximity: 1,
        rssi,
        imu,
    };
    serde_json::to_string(&record).unwrap()
}

#[test]
fn infer_classifies_a_close_window_and_is_repeatable() {
    let ws = Workspace::new(600, 0.0);
    ws.ok(&["simulate", "--out", "data.jsonl"]);
    ws.ok(&["train", "--data", "data.jsonl", "--out", "m.prxm", "--epochs", "10"]);
    let line = one_metre_record();
    std::fs::write(ws.path("records.jsonl"), format!("{line}\n{line}\n")).unwrap();
    let text = ws.ok(&["infer", "--model", "m.prxm", "--records", "records.jsonl"]);
    let outputs: Vec<InferOutput> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(outputs.len(), 2);
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0].id, "one-metre");
    assert_eq!(outputs[0].decision, 1, "p = {}", outputs[0].probability);
    assert_eq!(text, ws.ok(&["infer", "--model", "m.prxm", "--records", "records.jsonl"]));

    // Malformed third line.
    std::fs::write(ws.path("bad.jsonl"), format!("{line}\n\n{{\"rssi\": [1, 2]}}\n")).unwrap();
    let out = ws.run(&["infer", "--model", "m.prxm", "--records", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    // Truncated model.
    let model = ws.read("m.prxm");
    std::fs::write(ws.path("cut.prxm"), &model[..model.len() / 2]).unwrap();
    let out = ws.run(&["infer", "--model", "cut.prxm", "--records", "records.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("checksum"), "{}", stderr(&out));
    std::fs::write(ws.path("junk.prxm"), b"hello").unwrap();
    let out = ws.run(&["infer", "--model", "junk.prxm", "--records", "records.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("magic"), "{}", stderr(&out));
}

#[test]
fn selftest_rejects_unknown_criteria() {
    let ws = Workspace::new(6, 0.0);
    let out = ws.run(&["selftest", "--only", "12"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ws.run(&["selftest", "--only", "6"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("criterion  6"));
}
