use proxkit_core::bnn::LiteArch;
use proxkit_core::encoding::HistogramSpec;
use proxkit_core::kmm::KmmConfig;
use proxkit_core::nn::TrainConfig;
use proxkit_core::pipeline::{
    encode_records, evaluate_ldpl, evaluate_model, train_ldpl, train_model, Architecture, EncodedDataset,
    TrainOptions,
};
use proxkit_core::simulator::{generate_dataset, SampleRecord, SimConfig};

fn dataset(bias: f64, total: usize, seed: u64) -> (Vec<SampleRecord>, EncodedDataset) {
    let cfg = SimConfig {
        bias,
        rng_seed: seed,
        ..SimConfig::default()
    }
    .with_total_records(total);
    let records = generate_dataset(&cfg).unwrap();
    let encoded = encode_records(&records, &HistogramSpec::default()).unwrap();
    (records, encoded)
}

fn options(architecture: Architecture, regularize: bool) -> TrainOptions {
    TrainOptions {
        architecture,
        regularize,
        kmm: KmmConfig::default(),
        train: TrainConfig {
            epochs: 8,
            seed: 4,
            ..TrainConfig::default()
        },
    }
}

#[test]
fn regularized_full_model_beats_chance_and_infers_consistently() {
    let (_, train) = dataset(0.8, 1000, 10);
    let (test_records, test) = dataset(0.0, 200, 11);
    let trained = train_model(
        &train,
        &HistogramSpec::default(),
        &TrainOptions {
            train: TrainConfig {
                epochs: 15,
                seed: 4,
                ..TrainConfig::default()
            },
            ..options(Architecture::Full { widths: vec![64, 64] }, true)
        },
    )
    .unwrap();
    assert!(!trained.weights.is_uniform());
    assert_eq!(trained.history.len(), 15);
    let eval = evaluate_model(&trained.model, &test).unwrap();
    assert!(eval.metrics.f1 > 0.6, "{:?}", eval.metrics);

    // Single-window inference agrees with the batched evaluation.
    for (record, &decision) in test_records.iter().zip(&eval.decisions).take(25) {
        let one = trained.model.infer(&record.rssi, &record.imu).unwrap();
        assert_eq!(one.decision, decision);
        assert!((0.0..=1.0).contains(&one.probability));
    }
}

#[test]
fn lite_model_trains_and_uses_packed_weights() {
    let (_, train) = dataset(0.0, 300, 12);
    let arch = LiteArch {
        binary_widths: vec![128, 128],
        ..LiteArch::default()
    };
    let trained = train_model(&train, &HistogramSpec::default(), &options(Architecture::Lite(arch), false)).unwrap();
    let eval = evaluate_model(&trained.model, &train).unwrap();
    assert!(eval.metrics.f1 > 0.6, "{:?}", eval.metrics);
    assert_eq!(trained.model.classifier.kind(), "lite");
}

#[test]
fn ldpl_baseline_is_a_reasonable_detector() {
    let (train_records, _) = dataset(0.0, 300, 13);
    let (test_records, _) = dataset(0.0, 300, 14);
    let model = train_ldpl(&train_records, None).unwrap();
    assert!(model.exponent > 1.0 && model.exponent < 3.5, "{model:?}");
    let eval = evaluate_ldpl(&model, &test_records, 2.0).unwrap();
    assert!(eval.metrics.f1 > 0.6, "{:?}", eval.metrics);
}

#[test]
fn training_is_deterministic() {
    let (_, train) = dataset(0.5, 150, 15);
    let opts = options(Architecture::Full { widths: vec![16] }, true);
    let a = train_model(&train, &HistogramSpec::default(), &opts).unwrap();
    let b = train_model(&train, &HistogramSpec::default(), &opts).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.history, b.history);
}
