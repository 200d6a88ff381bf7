use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use proxkit::commands::{self, DetectorKind, EvalRequest, TrainArch, TrainRequest};
use proxkit::config::PipelineConfig;
use proxkit::selftest::{self, CHECKS};
use proxkit::{CliError, CliResult};

/// IMU-assisted BLE proximity detection pipeline.
#[derive(Parser)]
#[command(name = "proxkit", version)]
struct Cli {
    /// Pipeline configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed and PROXKIT_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled dataset of RSSI/IMU windows (JSONL).
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Total records, split evenly over the environments.
        #[arg(long)]
        records: Option<usize>,
        /// Carriage/label coupling in [0, 1].
        #[arg(long)]
        bias: Option<f64>,
    },
    /// Encode a dataset into feature rows (histogram, then raw carriage features).
    Featurize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute kernel mean matching weights from feature rows.
    KmmWeights {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier or the path loss baseline.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        arch: Option<TrainArch>,
        /// Reweight positives by kernel mean matching.
        #[arg(long)]
        regularize: bool,
        /// Precomputed weights from `kmm-weights`, used instead of solving again.
        #[arg(long, conflicts_with = "regularize")]
        weights: Option<PathBuf>,
        /// Fix the path loss reference power to the configured TX power.
        #[arg(long)]
        fix_tx: bool,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a model on a dataset and print a JSON metrics report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Proximity threshold in metres; defaults to the configured one.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_enum)]
        detector: Option<DetectorKind>,
        /// Per-window decisions (JSONL).
        #[arg(long)]
        decisions: Option<PathBuf>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify JSONL window records, one JSON result per line.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        records: PathBuf,
    },
    /// Run the built-in acceptance checks.
    Selftest {
        /// Include the checks that train full-size networks.
        #[arg(long)]
        full: bool,
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn run(cli: Cli) -> CliResult<String> {
    let mut cfg = PipelineConfig::load_or_default(cli.config.as_deref())?;
    cfg.resolve_seed(cli.seed)?;
    match cli.command {
        Command::Simulate { out, records, bias } => {
            if let Some(total) = records {
                cfg.set_total_records(total);
            }
            if let Some(bias) = bias {
                cfg.simulation.bias = bias;
            }
            cfg.validate()?;
            commands::cmd_simulate(&cfg, &out)
        }
        Command::Featurize { data, out } => commands::cmd_featurize(&cfg, &data, &out),
        Command::KmmWeights { features, out } => commands::cmd_kmm_weights(&cfg, &features, &out),
        Command::Train {
            data,
            out,
            arch,
            regularize,
            weights,
            fix_tx,
            epochs,
        } => {
            if let Some(epochs) = epochs {
                cfg.train.epochs = epochs;
                cfg.validate()?;
            }
            let arch = arch.unwrap_or(match cfg.model.arch {
                proxkit::config::ArchKind::Full => TrainArch::Full,
                proxkit::config::ArchKind::Lite => TrainArch::Lite,
            });
            let req = TrainRequest {
                arch,
                regularize: regularize || (cfg.model.regularize && weights.is_none()),
                weights: weights.as_deref(),
                fix_tx,
            };
            commands::cmd_train(&cfg, &data, &out, &req)
        }
        Command::Eval {
            model,
            data,
            threshold,
            detector,
            decisions,
            out,
        } => {
            let req = EvalRequest {
                threshold: threshold.unwrap_or(cfg.threshold),
                detector,
                decisions: decisions.as_deref(),
                report: out.as_deref(),
            };
            commands::cmd_eval(&cfg, &model, &data, &req)
        }
        Command::Infer { model, records } => commands::cmd_infer(&model, &records),
        Command::Selftest { full, only } => run_selftest(full, &only),
    }
}

fn run_selftest(full: bool, only: &[u8]) -> CliResult<String> {
    for id in only {
        if selftest::find(*id).is_none() {
            return Err(CliError::Config(format!("no criterion {id}; valid ids are 1-11")));
        }
    }
    let mut failed = 0;
    for check in &CHECKS {
        let wanted = if only.is_empty() { full || !check.slow } else { only.contains(&check.id) };
        if !wanted {
            if only.is_empty() {
                println!("criterion {:>2} {:<32} SKIP (pass --full)", check.id, check.name);
            }
            continue;
        }
        let outcome = selftest::run_check(check);
        failed += usize::from(!outcome.passed);
        println!("{}", outcome.line());
    }
    if failed > 0 {
        return Err(CliError::Numeric(format!("{failed} selftest check(s) failed")));
    }
    Ok("selftest passed".into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            if !text.is_empty() {
                println!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("proxkit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
