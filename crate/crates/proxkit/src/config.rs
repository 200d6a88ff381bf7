//! Pipeline configuration read from TOML.

use std::path::Path;

use proxkit_core::bnn::LiteArch;
use proxkit_core::encoding::HistogramSpec;
use proxkit_core::kmm::KmmConfig;
use proxkit_core::nn::{TrainConfig, FULL_WIDTHS};
use proxkit_core::pipeline::{Architecture, TrainOptions};
use proxkit_core::simulator::{CarriageProfile, EnvironmentCount, EnvironmentKind, EnvironmentProfile, SimConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "PROXKIT_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    #[default]
    Full,
    Lite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub tx_power: f64,
    pub rssi_rate: f64,
    pub imu_rate: f64,
    pub window_seconds: f64,
    pub max_distance: f64,
    pub bias: f64,
    /// Records per environment.
    pub records: Vec<EnvironmentCount>,
    pub environments: Vec<EnvironmentProfile>,
    pub carriages: Vec<CarriageProfile>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            tx_power: sim.tx_power,
            rssi_rate: sim.rssi_rate,
            imu_rate: sim.imu_rate,
            window_seconds: sim.window_seconds,
            max_distance: sim.max_distance,
            bias: sim.bias,
            records: sim.counts,
            environments: sim.environments,
            carriages: sim.carriages,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub arch: ArchKind,
    pub regularize: bool,
    pub full_widths: Vec<usize>,
    pub lite: LiteArch,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            arch: ArchKind::Full,
            regularize: false,
            full_widths: FULL_WIDTHS.to_vec(),
            lite: LiteArch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            weight_decay: t.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmmSection {
    pub gamma: f64,
    pub w_max: f64,
    pub ridge: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for KmmSection {
    fn default() -> Self {
        let k = KmmConfig::default();
        Self {
            gamma: k.gamma,
            w_max: k.w_max,
            ridge: k.ridge,
            max_iters: k.max_iters,
            tolerance: k.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root of every random stream in the pipeline.
    pub seed: u64,
    /// Proximity threshold in metres.
    pub threshold: f64,
    pub simulation: SimulationSection,
    pub encoding: HistogramSpec,
    pub kmm: KmmSection,
    pub train: TrainSection,
    pub model: ModelSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threshold: SimConfig::default().proximity_threshold,
            simulation: SimulationSection::default(),
            encoding: HistogramSpec::default(),
            kmm: KmmSection::default(),
            train: TrainSection::default(),
            model: ModelSection::default(),
        }
    }
}

/// SplitMix64 step, used to give each pipeline stage its own seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SIM_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

impl PipelineConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Built-in defaults when `path` is `None`.
    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `--seed`, then `PROXKIT_SEED`, over the configured seed.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> CliResult<()> {
        if let Some(seed) = flag {
            self.seed = seed;
        } else if let Ok(value) = std::env::var(SEED_ENV) {
            self.seed = value
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV} must be an unsigned integer, got {value:?}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        let map = crate::error::tagged("config");
        self.sim_config().validate().map_err(&map)?;
        self.encoding.validate().map_err(&map)?;
        let steps = (self.encoding.phi_max - self.encoding.phi_min) / self.encoding.delta;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(CliError::Config("encoding.delta must divide phi_max - phi_min".into()));
        }
        self.kmm_config().validate().map_err(&map)?;
        self.train_config().validate().map_err(&map)?;
        if self.model.full_widths.is_empty() || self.model.full_widths.contains(&0) {
            return Err(CliError::Config("model.full_widths must be non-empty and positive".into()));
        }
        self.model.lite.validate().map_err(&map)?;
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.simulation;
        SimConfig {
            tx_power: s.tx_power,
            rssi_rate: s.rssi_rate,
            imu_rate: s.imu_rate,
            window_seconds: s.window_seconds,
            proximity_threshold: self.threshold,
            max_distance: s.max_distance,
            bias: s.bias,
            counts: s.records.clone(),
            rng_seed: derive_seed(self.seed, SIM_STREAM),
            environments: s.environments.clone(),
            carriages: s.carriages.clone(),
        }
    }

    pub fn kmm_config(&self) -> KmmConfig {
        KmmConfig {
            gamma: self.kmm.gamma,
            w_max: self.kmm.w_max,
            ridge: self.kmm.ridge,
            max_iters: self.kmm.max_iters,
            tolerance: self.kmm.tolerance,
            ..KmmConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            weight_decay: t.weight_decay,
            seed: derive_seed(self.seed, TRAIN_STREAM),
        }
    }

    pub fn architecture(&self, arch: ArchKind) -> Architecture {
        match arch {
            ArchKind::Full => Architecture::Full {
                widths: self.model.full_widths.clone(),
            },
            ArchKind::Lite => Architecture::Lite(self.model.lite.clone()),
        }
    }

    pub fn train_options(&self, arch: ArchKind, regularize: bool) -> TrainOptions {
        TrainOptions {
            architecture: self.architecture(arch),
            regularize,
            kmm: self.kmm_config(),
            train: self.train_config(),
        }
    }

    /// SHA-256 of the canonical TOML rendering, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Sets the number of simulated records, split evenly over environments.
    pub fn set_total_records(&mut self, total: usize) {
        let per = total / EnvironmentKind::ALL.len();
        let extra = total % EnvironmentKind::ALL.len();
        self.simulation.records = EnvironmentKind::ALL
            .iter()
            .enumerate()
            .map(|(i, &environment)| EnvironmentCount {
                environment,
                records: per + usize::from(i < extra),
            })
            .collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(matches!(PipelineConfig::from_toml("bogus = 1"), Err(CliError::Config(_))));
        assert!(matches!(
            PipelineConfig::from_toml("[simulation]\nbias = 2.0"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            PipelineConfig::from_toml("[encoding]\nphi_min = -100.0\nphi_max = 0.0\ndelta = 3.0"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(PipelineConfig::from_toml("[train]\nbatch_size = 1"), Err(CliError::Config(_))));
    }

    #[test]
    fn stage_seeds_differ_and_follow_the_root_seed() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            seed: 1,
            ..PipelineConfig::default()
        };
        assert_ne!(a.sim_config().rng_seed, a.train_config().seed);
        assert_ne!(a.sim_config().rng_seed, b.sim_config().rng_seed);
        assert_eq!(a.sim_config().rng_seed, PipelineConfig::default().sim_config().rng_seed);
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.threshold = 6.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
