//! Built-in acceptance checks, run by `proxkit selftest` and the acceptance
//! test target.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use proxkit_core::bnn::{BnnClassifier, LiteArch, PackedBits};
use proxkit_core::encoding::{
    histogramize, stat_energy, stat_skewness, stat_variance, FeatureScaler, HistogramSpec, CARRIAGE_DIM,
};
use proxkit_core::eval::{
    evaluate, ldpl_detect, ldpl_fit, ndcf, precision_recall_f1, ConfusionCounts, LdplModel, Metrics,
};
use proxkit_core::kmm::{build_problem, mmd_squared, project_feasible, solve, KmmConfig};
use proxkit_core::linalg::Matrix;
use proxkit_core::model::{Classifier, ProximityModel};
use proxkit_core::nn::{gradient_check, predict, MlpClassifier, TrainConfig, FULL_WIDTHS};
use proxkit_core::pipeline::{
    encode_records, evaluate_ldpl, evaluate_model, fit_scaler, train_ldpl, train_model, Architecture, EncodedDataset,
    TrainOptions,
};
use proxkit_core::simulator::{
    generate_dataset, path_loss_mean_rssi, proximity_label, EnvironmentCount, EnvironmentKind, EnvironmentProfile,
    SampleRecord, SimConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::commands::{evaluate_loaded, parse_model, report_bytes, train_bytes, MetricsReport, TrainArch, TrainRequest};
use crate::config::PipelineConfig;
use crate::format;
use crate::io::{from_jsonl, to_jsonl};
use crate::manifest::RunManifest;

/// `(passed, detail)`; `Err` means the check could not run at all.
type Verdict = Result<(bool, String), String>;

pub struct Check {
    pub id: u8,
    pub name: &'static str,
    /// Trains full-size networks; skipped by a plain `proxkit selftest`.
    pub slow: bool,
    run: fn() -> Verdict,
}

pub const CHECKS: [Check; 11] = [
    Check { id: 1, name: "gradient correctness", slow: false, run: gradients },
    Check { id: 2, name: "kmm feasibility and optimality", slow: false, run: kmm_feasibility },
    Check { id: 3, name: "distribution matching", slow: false, run: distribution_matching },
    Check { id: 4, name: "bias-robustness ordering", slow: true, run: bias_robustness },
    Check { id: 5, name: "ldpl baseline sanity", slow: false, run: ldpl_sanity },
    Check { id: 6, name: "metric arithmetic", slow: false, run: metric_arithmetic },
    Check { id: 7, name: "bit-packed equivalence", slow: false, run: bitpacked_equivalence },
    Check { id: 8, name: "size contract", slow: false, run: size_contract },
    Check { id: 9, name: "small-budget crossover", slow: true, run: small_budget_crossover },
    Check { id: 10, name: "determinism", slow: false, run: determinism },
    Check { id: 11, name: "encoding invariants", slow: false, run: encoding_invariants },
];

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<32} {} ({:.1} s) {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

pub fn run_check(check: &Check) -> CheckOutcome {
    let start = Instant::now();
    let (passed, detail) = match (check.run)() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckOutcome {
        id: check.id,
        name: check.name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

pub fn find(id: u8) -> Option<&'static Check> {
    CHECKS.iter().find(|c| c.id == id)
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches data")
}

fn gradients() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let model = MlpClassifier::new(6, &[8, 7], seed).map_err(err)?;
        let x = uniform_matrix(&mut rng, 10, 6, 1.0);
        let labels: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        let weights: Vec<f64> = (0..10).map(|_| rng.random_range(0.2..3.0)).collect();
        worst = worst.max(gradient_check(&model, &x, &labels, &weights).map_err(err)?);
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.2e} over 5 models")))
}

fn gaussian_points(rng: &mut ChaCha8Rng, n: usize, dim: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect())
        .collect()
}

fn kmm_feasibility() -> Verdict {
    let cfg = KmmConfig::default();
    let mut worst_sum: f64 = 0.0;
    let mut worst_kkt_ratio: f64 = 0.0;
    let mut box_ok = true;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let n_pos = 25 + 25 * seed as usize;
        let n_neg = rng.random_range(50..400);
        let dim = rng.random_range(2..8);
        let shift = rng.random_range(0.0..1.5);
        let pos = gaussian_points(&mut rng, n_pos, dim, shift);
        let neg = gaussian_points(&mut rng, n_neg, dim, 0.0);
        let problem = build_problem(&pos, &neg, &cfg).map_err(err)?;
        let sol = solve(&problem, &cfg).map_err(err)?;
        let w = &sol.weights;
        worst_sum = worst_sum.max((w.iter().sum::<f64>() - n_pos as f64).abs());
        box_ok &= w.iter().all(|&v| (0.0..=cfg.w_max).contains(&v));
        // Recompute the projected-gradient residual rather than trusting the solver's.
        let grad = problem.gradient(w);
        let stepped: Vec<f64> = w.iter().zip(&grad).map(|(a, g)| a - g).collect();
        let projected = project_feasible(
            &stepped,
            n_pos as f64,
            cfg.w_max,
            cfg.projection_max_iters,
            cfg.projection_tolerance,
        );
        let kkt = w.iter().zip(&projected).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst_kkt_ratio = worst_kkt_ratio.max(kkt / (1e-4 * n_pos as f64));
    }
    let passed = worst_sum <= 1e-6 && box_ok && worst_kkt_ratio < 1.0;
    Ok((
        passed,
        format!(
            "max |sum-n+| {worst_sum:.1e}, box {}, max kkt/(1e-4 n+) {worst_kkt_ratio:.3}",
            if box_ok { "ok" } else { "violated" }
        ),
    ))
}

/// The shared benchmark: biased training data, unbiased test data.
pub struct Benchmark {
    pub spec: HistogramSpec,
    pub train_records: Vec<SampleRecord>,
    pub test_records: Vec<SampleRecord>,
    pub train: EncodedDataset,
    pub test: EncodedDataset,
}

pub const BENCH_TRAIN_RECORDS: usize = 2000;
pub const BENCH_TEST_RECORDS: usize = 1000;
pub const BENCH_TRAIN_BIAS: f64 = 0.8;
pub const BENCH_THRESHOLD: f64 = 2.0;
pub const BENCH_EPOCHS: usize = 20;
/// Full-precision widths that fit the same 0.3 MB budget as the lite model.
pub const SMALL_FULL_WIDTHS: [usize; 3] = [150, 200, 150];
pub const SIZE_BUDGET: usize = 300_000;

fn bench_records(bias: f64, total: usize, seed: u64) -> Result<Vec<SampleRecord>, String> {
    let cfg = SimConfig {
        bias,
        rng_seed: seed,
        proximity_threshold: BENCH_THRESHOLD,
        ..SimConfig::default()
    }
    .with_total_records(total);
    generate_dataset(&cfg).map_err(err)
}

pub fn benchmark() -> Result<&'static Benchmark, String> {
    static BENCH: OnceLock<Result<Benchmark, String>> = OnceLock::new();
    BENCH
        .get_or_init(|| {
            let spec = HistogramSpec::default();
            let train_records = bench_records(BENCH_TRAIN_BIAS, BENCH_TRAIN_RECORDS, 1)?;
            let test_records = bench_records(0.0, BENCH_TEST_RECORDS, 2)?;
            let train = encode_records(&train_records, &spec).map_err(err)?;
            let test = encode_records(&test_records, &spec).map_err(err)?;
            Ok(Benchmark {
                spec,
                train_records,
                test_records,
                train,
                test,
            })
        })
        .as_ref()
        .map_err(Clone::clone)
}

fn bench_options(architecture: Architecture, regularize: bool) -> TrainOptions {
    TrainOptions {
        architecture,
        regularize,
        kmm: KmmConfig::default(),
        train: TrainConfig {
            epochs: BENCH_EPOCHS,
            seed: 3,
            ..TrainConfig::default()
        },
    }
}

/// Trains on the benchmark; returns the test F1 and the serialized size.
fn bench_run(architecture: Architecture, regularize: bool) -> Result<(f64, usize), String> {
    let b = benchmark()?;
    let trained = train_model(&b.train, &b.spec, &bench_options(architecture, regularize)).map_err(err)?;
    let f1 = evaluate_model(&trained.model, &b.test).map_err(err)?.metrics.f1;
    let bytes = format::encoded_len(&trained.model).map_err(err)?;
    Ok((f1, bytes))
}

fn split_by_label(rows: &[Vec<f64>], labels: &[u8]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let pos = rows.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(r, _)| r.clone()).collect();
    let neg = rows.iter().zip(labels).filter(|(_, &y)| y == 0).map(|(r, _)| r.clone()).collect();
    (pos, neg)
}

fn distribution_matching() -> Verdict {
    let b = benchmark()?;
    let scaler = fit_scaler(&b.train.carriage).map_err(err)?;
    let scaled = b.train.scaled_carriage(&scaler).map_err(err)?;
    let (pos, neg) = split_by_label(&scaled, &b.train.labels);
    let cfg = KmmConfig::default();
    let problem = build_problem(&pos, &neg, &cfg).map_err(err)?;
    let sol = solve(&problem, &cfg).map_err(err)?;
    let unit = mmd_squared(&pos, &neg, &vec![1.0; pos.len()], cfg.gamma).map_err(err)?;
    let weighted = mmd_squared(&pos, &neg, &sol.weights, cfg.gamma).map_err(err)?;
    let ratio = weighted / unit;
    Ok((
        ratio <= 0.5,
        format!("weighted MMD² {weighted:.4e} / unit {unit:.4e} = {ratio:.3}"),
    ))
}

fn bias_robustness() -> Verdict {
    let b = benchmark()?;
    let ldpl = train_ldpl(&b.train_records, None).map_err(err)?;
    let ldpl_f1 = evaluate_ldpl(&ldpl, &b.test_records, BENCH_THRESHOLD).map_err(err)?.metrics.f1;
    let full = || Architecture::Full {
        widths: FULL_WIDTHS.to_vec(),
    };
    let (unreg, _) = bench_run(full(), false)?;
    let (reg, _) = bench_run(full(), true)?;
    let passed = reg - unreg >= 0.03 && reg >= ldpl_f1 + 0.05;
    Ok((
        passed,
        format!("F1 regularized {reg:.3}, unregularized {unreg:.3}, ldpl {ldpl_f1:.3}"),
    ))
}

fn noiseless_pairs(exponent: f64, tx: f64) -> Result<Vec<(f64, f64)>, String> {
    (1..=60)
        .map(|i| {
            let d = 0.2 * f64::from(i);
            path_loss_mean_rssi(d, tx, exponent).map(|r| (r, d)).map_err(err)
        })
        .collect()
}

fn ldpl_sanity() -> Verdict {
    let mut worst_fit: f64 = 0.0;
    let mut detect_ok = true;
    for exponent in [2.0, 2.8] {
        let model = ldpl_fit(&noiseless_pairs(exponent, -59.0)?, None).map_err(err)?;
        worst_fit = worst_fit.max((model.exponent - exponent).abs());
        let truth = LdplModel { tx: -59.0, exponent };
        for i in 1..=200 {
            let d = 0.1 + 0.05 * f64::from(i) + 0.013;
            for tau in [1.0, 2.0, 3.5] {
                if (d - tau).abs() < 1e-6 {
                    continue;
                }
                let rssi = path_loss_mean_rssi(d, truth.tx, exponent).map_err(err)?;
                detect_ok &= ldpl_detect(&[rssi; 5], &model, tau).map_err(err)? == proximity_label(d, tau);
            }
        }
    }
    // Shadowed windows: only the per-window log-normal term is random.
    let mut sim = SimConfig {
        environments: vec![EnvironmentProfile {
            name: EnvironmentKind::Static,
            path_loss_exponent: 2.0,
            rician_k: f64::INFINITY,
            shadowing_sigma: 2.0,
        }],
        counts: vec![EnvironmentCount {
            environment: EnvironmentKind::Static,
            records: 500,
        }],
        rng_seed: 5,
        ..SimConfig::default()
    };
    for c in &mut sim.carriages {
        c.body_attenuation = 0.0;
        c.extra_fade_sigma = 0.0;
    }
    let records = generate_dataset(&sim).map_err(err)?;
    let shadowed = train_ldpl(&records, None).map_err(err)?;
    let shadow_err = (shadowed.exponent - 2.0).abs();
    let passed = worst_fit <= 1e-9 && detect_ok && shadow_err <= 0.2;
    Ok((
        passed,
        format!(
            "noiseless |n-n̂| {worst_fit:.1e}, off-boundary detection {}, shadowed n̂ {:.3}",
            if detect_ok { "exact" } else { "wrong" },
            shadowed.exponent
        ),
    ))
}

fn counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> ConfusionCounts {
    ConfusionCounts {
        true_pos: tp,
        false_pos: fp,
        true_neg: tn,
        false_neg: fn_,
    }
}

fn metric_arithmetic() -> Verdict {
    let mut failures = Vec::new();
    let mut expect = |what: &str, ok: bool| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let (p, r, f) = precision_recall_f1(&counts(9, 1, 9, 1));
    expect("9/1/1/9 gives 0.9", (p - 0.9).abs() < 1e-12 && (r - 0.9).abs() < 1e-12 && (f - 0.9).abs() < 1e-12);
    let (p, _, _) = precision_recall_f1(&counts(0, 0, 5, 5));
    expect("empty precision is 0", p == 0.0);
    let c = counts(7, 3, 11, 3);
    let (p, r, f) = precision_recall_f1(&c);
    expect("precision = recall gives equal f1", p == r && (f - p).abs() < 1e-12);
    expect("perfect detector ndcf 0", ndcf(&counts(10, 0, 10, 0), 1.0, 1.0).map_err(err)? == 0.0);
    // E_miss = 0.1, E_fa = 0.2.
    let v = ndcf(&counts(9, 2, 8, 1), 1.0, 1.0).map_err(err)?;
    expect("ndcf 0.1 + 0.2", (v - 0.3).abs() < 1e-12);
    expect("always positive ndcf 1", ndcf(&counts(10, 10, 0, 0), 1.0, 1.0).map_err(err)? == 1.0);
    expect("missing class is an error", ndcf(&counts(0, 3, 4, 0), 1.0, 1.0).is_err());

    let labels: Vec<u8> = (0..2000).map(|i| (i % 2) as u8).collect();
    let oracle = evaluate(&mut |y: &u8| Ok(*y), &labels, &labels).map_err(err)?;
    expect("oracle detector", oracle.metrics.f1 == 1.0 && oracle.metrics.ndcf == 0.0);
    let inverted = evaluate(&mut |y: &u8| Ok(1 - *y), &labels, &labels).map_err(err)?;
    expect("inverting detector ndcf 2", inverted.metrics.ndcf == 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let coin = evaluate(&mut |_: &u8| Ok(u8::from(rng.random::<bool>())), &labels, &labels).map_err(err)?;
    expect("coin flip ndcf near 1", (coin.metrics.ndcf - 1.0).abs() <= 0.1);

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let c = counts(
            rng.random_range(0..50),
            rng.random_range(0..50),
            rng.random_range(1..50),
            rng.random_range(1..50),
        );
        let m = Metrics::from_counts(c).map_err(err)?;
        worst = worst.max((m.ndcf - (m.e_miss + m.e_fa)).abs());
    }
    expect("unit-weight ndcf identity", worst <= 1e-12);
    let passed = failures.is_empty();
    let detail = if passed {
        format!("all examples exact, identity error {worst:.1e}")
    } else {
        format!("failed: {}", failures.join(", "))
    };
    Ok((passed, detail))
}

fn bitpacked_equivalence() -> Verdict {
    let mut net = BnnClassifier::new(25 + CARRIAGE_DIM, &LiteArch::default(), 7).map_err(err)?;
    net.finalize();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = uniform_matrix(&mut rng, 2000, net.input_width(), 2.0);
    let reference = net.forward_reference(&x).map_err(err)?;
    let packed = net.infer_bitpacked(&x).map_err(err)?;
    let mismatches = (0..x.rows())
        .filter(|&i| predict(reference.row(i)) != predict(packed.row(i)))
        .count();
    Ok((mismatches == 0, format!("{mismatches} mismatches on {} inputs", x.rows())))
}

fn unit_scaler() -> Result<FeatureScaler, String> {
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|i| (0..CARRIAGE_DIM).map(|j| (i * j) as f64).collect())
        .collect();
    let mut scaler = FeatureScaler::fit(&rows).map_err(err)?;
    scaler.round_to_f32();
    Ok(scaler)
}

/// Serialized size of an untrained model with the given classifier.
fn model_bytes(classifier: Classifier) -> Result<usize, String> {
    let model = ProximityModel::new(HistogramSpec::default(), unit_scaler()?, classifier).map_err(err)?;
    format::encoded_len(&model).map_err(err)
}

fn size_contract() -> Verdict {
    let width = 25 + CARRIAGE_DIM;
    let mut full = MlpClassifier::new(width, &FULL_WIDTHS, 0).map_err(err)?;
    full.round_to_f32();
    let full_bytes = model_bytes(Classifier::Full(full))?;
    let arch = LiteArch::default();
    let mut lite = BnnClassifier::new(width, &arch, 0).map_err(err)?;
    lite.finalize();
    let mut payload_ok = true;
    let mut inputs = arch.input_width;
    for block in &lite.binary {
        let out = block.dense.outputs();
        let expected = out * inputs.div_ceil(8);
        let got = block.dense.packed().map_or(0, |p| p.as_bytes().len());
        payload_ok &= got == expected && PackedBits::payload_len(out, inputs) == expected;
        inputs = out;
    }
    let lite_bytes = model_bytes(Classifier::Lite(lite))?;
    let full_ok = (4_500_000..=5_500_000).contains(&full_bytes);
    let lite_ok = (255_000..=345_000).contains(&lite_bytes);
    Ok((
        full_ok && lite_ok && payload_ok,
        format!(
            "full {full_bytes} B, lite {lite_bytes} B, binary payloads {}",
            if payload_ok { "exact" } else { "wrong" }
        ),
    ))
}

fn small_budget_crossover() -> Verdict {
    let (lite_f1, lite_bytes) = bench_run(Architecture::Lite(LiteArch::default()), true)?;
    let (full_f1, full_bytes) = bench_run(
        Architecture::Full {
            widths: SMALL_FULL_WIDTHS.to_vec(),
        },
        true,
    )?;
    let within = lite_bytes <= SIZE_BUDGET && full_bytes <= SIZE_BUDGET;
    Ok((
        within && lite_f1 >= full_f1,
        format!("F1 lite {lite_f1:.3} ({lite_bytes} B) vs full {full_f1:.3} ({full_bytes} B)"),
    ))
}

/// Small end-to-end configuration used by the determinism check.
pub fn determinism_config() -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed: 11,
        ..PipelineConfig::default()
    };
    cfg.set_total_records(240);
    cfg.simulation.bias = BENCH_TRAIN_BIAS;
    cfg.train.epochs = 3;
    cfg.model.full_widths = vec![32, 32];
    cfg
}

/// Dataset, model and metrics bytes from one in-process pipeline run.
fn pipeline_artifacts(cfg: &PipelineConfig) -> Result<[Vec<u8>; 3], String> {
    let records = crate::commands::simulate_records(cfg).map_err(err)?;
    let dataset = to_jsonl(&records);
    let reloaded: Vec<SampleRecord> = from_jsonl(dataset.as_slice(), "dataset").map_err(err)?;
    if to_jsonl(&reloaded) != dataset {
        return Err("dataset does not survive a save/load/save cycle".into());
    }
    let req = TrainRequest {
        arch: TrainArch::Full,
        regularize: true,
        weights: None,
        fix_tx: false,
    };
    let mut manifest = RunManifest::new("selftest", cfg.hash(), cfg.seed);
    let model_bytes = train_bytes(cfg, &reloaded, &req, &mut manifest).map_err(err)?;
    let model = parse_model(&model_bytes, std::path::Path::new("model")).map_err(err)?;
    if let crate::commands::LoadedModel::Classifier(m) = &model {
        if format::encode(m).map_err(err)? != model_bytes {
            return Err("model does not survive a save/load/save cycle".into());
        }
    }
    let evaluation = evaluate_loaded(&model, &reloaded, cfg.threshold).map_err(err)?;
    let report = report_bytes(&MetricsReport {
        detector: model.detector().as_str().to_string(),
        threshold: cfg.threshold,
        windows: reloaded.len(),
        metrics: evaluation.metrics,
    });
    Ok([dataset, model_bytes, report])
}

fn determinism() -> Verdict {
    let cfg = determinism_config();
    let first = pipeline_artifacts(&cfg)?;
    let second = pipeline_artifacts(&cfg)?;
    let names = ["dataset", "model", "metrics"];
    let differing: Vec<&str> = names
        .iter()
        .zip(first.iter().zip(&second))
        .filter(|(_, (a, b))| a != b)
        .map(|(n, _)| *n)
        .collect();
    let detail = if differing.is_empty() {
        format!(
            "identical dataset ({} B), model ({} B), metrics ({} B)",
            first[0].len(),
            first[1].len(),
            first[2].len()
        )
    } else {
        format!("differing: {}", differing.join(", "))
    };
    Ok((differing.is_empty(), detail))
}

fn encoding_invariants() -> Verdict {
    let spec = HistogramSpec::default();
    let bins = spec.bins();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = [0usize; 5];
    for _ in 0..1000 {
        let len = rng.random_range(2..120);
        // Values strictly inside bins 0..bins-2, so a +delta shift stays in range.
        let cells: Vec<(usize, f64)> = (0..len)
            .map(|_| (rng.random_range(0..bins - 1), rng.random_range(0.05..0.95)))
            .collect();
        let rssi: Vec<f64> = cells.iter().map(|&(k, f)| spec.phi_min + spec.delta * (k as f64 + f)).collect();
        let h = histogramize(&rssi, &spec).map_err(err)?;
        if (h.bins.iter().sum::<f64>() - 1.0).abs() > 1e-9 || h.bins.iter().any(|&r| r < 0.0) {
            failures[0] += 1;
        }
        let shifted: Vec<f64> = rssi.iter().map(|v| v + spec.delta).collect();
        let hs = histogramize(&shifted, &spec).map_err(err)?;
        if hs.bins[0] != 0.0 || (0..bins - 1).any(|i| hs.bins[i + 1] != h.bins[i]) {
            failures[1] += 1;
        }
        let below = rng.random_range(1..10);
        let above = rng.random_range(1..10);
        let mut edge: Vec<f64> = (0..below).map(|_| spec.phi_min - rng.random_range(0.0..50.0) - 1e-6).collect();
        edge.extend((0..above).map(|_| spec.phi_max + rng.random_range(0.0..50.0)));
        let he = histogramize(&edge, &spec).map_err(err)?;
        let total = (below + above) as f64;
        if (he.bins[0] - below as f64 / total).abs() > 1e-12 || (he.bins[bins - 1] - above as f64 / total).abs() > 1e-12 {
            failures[2] += 1;
        }

        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-20.0..20.0)).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = stat_variance(&x).map_err(err)?;
        let energy = stat_energy(&x).map_err(err)?;
        let shift = rng.random_range(-50.0..50.0);
        let moved: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let tol = 1e-9 * (1.0 + energy.abs() + shift * shift);
        if (energy - (var + mean * mean)).abs() > tol || (stat_variance(&moved).map_err(err)? - var).abs() > tol {
            failures[3] += 1;
        }
        let center = rng.random_range(-10.0..10.0);
        let mut symmetric: Vec<f64> = x.iter().map(|v| center + v).collect();
        symmetric.extend(x.iter().map(|v| center - v));
        if stat_skewness(&symmetric).map_err(err)?.abs() > 1e-9 {
            failures[4] += 1;
        }
    }
    let names = ["normalization", "shift", "clamping", "variance/energy identities", "symmetric skew"];
    let bad: Vec<String> = names
        .iter()
        .zip(failures)
        .filter(|(_, n)| *n > 0)
        .map(|(name, n)| format!("{name} ({n})"))
        .collect();
    let detail = if bad.is_empty() {
        "1000 windows, no violations".to_string()
    } else {
        format!("violations: {}", bad.join(", "))
    };
    Ok((bad.is_empty(), detail))
}
