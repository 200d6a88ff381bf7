//! Synthetic BLE RSSI and IMU windows.
//!
//! Every record is generated from its own ChaCha stream keyed by
//! `(seed, record index)`, so datasets are reproducible and the generation
//! order does not matter.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Closest distance the path loss model is evaluated at.
pub const MIN_MODEL_DISTANCE: f64 = 0.1;
/// Lower end of the uniform distance distribution.
pub const MIN_SAMPLE_DISTANCE: f64 = 0.5;
pub const RSSI_FLOOR: f64 = -120.0;
pub const RSSI_CEILING: f64 = 0.0;
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Relative per-window jitter of gait amplitude and frequency.
const GAIT_JITTER: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    Static,
    SemiDynamic,
    Dynamic,
}

impl EnvironmentKind {
    pub const ALL: [EnvironmentKind; 3] = [Self::Static, Self::SemiDynamic, Self::Dynamic];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Static => "static",
            Self::SemiDynamic => "semi_dynamic",
            Self::Dynamic => "dynamic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarriageKind {
    HandStatic,
    HandSwing,
    PocketFront,
    PocketBack,
    Backpack,
}

impl CarriageKind {
    pub const ALL: [CarriageKind; 5] = [
        Self::HandStatic,
        Self::HandSwing,
        Self::PocketFront,
        Self::PocketBack,
        Self::Backpack,
    ];
    pub const HAND: [CarriageKind; 2] = [Self::HandStatic, Self::HandSwing];
    pub const STOWED: [CarriageKind; 3] = [Self::PocketFront, Self::PocketBack, Self::Backpack];

    /// Pocket-type states: the device sits on or against the body.
    pub fn is_stowed(self) -> bool {
        matches!(self, Self::PocketFront | Self::PocketBack | Self::Backpack)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::HandStatic => "hand_static",
            Self::HandSwing => "hand_swing",
            Self::PocketFront => "pocket_front",
            Self::PocketBack => "pocket_back",
            Self::Backpack => "backpack",
        }
    }
}

/// Radio propagation conditions of a venue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentProfile {
    pub name: EnvironmentKind,
    pub path_loss_exponent: f64,
    /// Linear Rician K factor; `inf` disables small-scale fading.
    pub rician_k: f64,
    /// Per-window log-normal shadowing, dB.
    pub shadowing_sigma: f64,
}

impl EnvironmentProfile {
    pub fn default_for(kind: EnvironmentKind) -> Self {
        let (n, k, sigma) = match kind {
            EnvironmentKind::Static => (1.8, 10.0, 1.0),
            EnvironmentKind::SemiDynamic => (2.2, 4.0, 2.0),
            EnvironmentKind::Dynamic => (2.8, 1.0, 3.0),
        };
        Self {
            name: kind,
            path_loss_exponent: n,
            rician_k: k,
            shadowing_sigma: sigma,
        }
    }

    pub fn defaults() -> Vec<Self> {
        EnvironmentKind::ALL.iter().map(|&k| Self::default_for(k)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss_exponent > 0.0 && self.path_loss_exponent.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "{}: path_loss_exponent must be positive",
                self.name.as_str()
            )));
        }
        if !(self.rician_k >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{}: rician_k must be non-negative",
                self.name.as_str()
            )));
        }
        if !(self.shadowing_sigma >= 0.0 && self.shadowing_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "{}: shadowing_sigma must be non-negative",
                self.name.as_str()
            )));
        }
        Ok(())
    }
}

/// How a device is carried and what that does to its IMU and RSSI.
///
/// Linear acceleration and angular velocity on axis `a` follow
/// `amplitude * axes[a] * (sin θ + harmonic[a] * cos 2θ)` with
/// `θ = 2π f t + φ`, plus white noise. The second harmonic gives each
/// profile its own skewness and kurtosis signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarriageProfile {
    pub name: CarriageKind,
    pub gravity_direction: [f64; 3],
    /// Extra loss from the body, dB (non-positive).
    pub body_attenuation: f64,
    pub gait_frequency: f64,
    pub accel_amplitude: f64,
    pub gyro_amplitude: f64,
    /// Per-sample fading caused by body movement, dB.
    pub extra_fade_sigma: f64,
    pub accel_axes: [f64; 3],
    pub gyro_axes: [f64; 3],
    pub accel_harmonic: [f64; 3],
    pub gyro_harmonic: [f64; 3],
    pub imu_noise_sigma: f64,
}

impl CarriageProfile {
    pub fn default_for(kind: CarriageKind) -> Self {
        let base = |gravity_direction,
                    body_attenuation,
                    gait_frequency,
                    accel_amplitude,
                    gyro_amplitude,
                    extra_fade_sigma| Self {
            name: kind,
            gravity_direction,
            body_attenuation,
            gait_frequency,
            accel_amplitude,
            gyro_amplitude,
            extra_fade_sigma,
            accel_axes: [1.0; 3],
            gyro_axes: [1.0; 3],
            accel_harmonic: [0.0; 3],
            gyro_harmonic: [0.0; 3],
            imu_noise_sigma: 0.05,
        };
        match kind {
            CarriageKind::HandStatic => Self {
                accel_axes: [1.0, 0.5, 0.3],
                gyro_axes: [0.4, 1.0, 0.3],
                accel_harmonic: [0.0, 0.3, 0.6],
                gyro_harmonic: [0.2, 0.0, 0.5],
                imu_noise_sigma: 0.03,
                ..base([0.0, 0.6, 0.8], 0.0, 1.0, 0.4, 0.2, 0.5)
            },
            CarriageKind::HandSwing => Self {
                accel_axes: [0.5, 1.0, 0.4],
                gyro_axes: [1.0, 0.3, 0.5],
                accel_harmonic: [0.4, 0.1, 0.0],
                gyro_harmonic: [0.0, 0.6, 0.3],
                ..base([0.6, 0.8, 0.0], -2.0, 0.9, 4.0, 3.0, 1.0)
            },
            CarriageKind::PocketFront => Self {
                accel_axes: [0.4, 1.0, 0.6],
                gyro_axes: [0.2, 1.0, 0.4],
                accel_harmonic: [0.5, 0.8, 0.2],
                gyro_harmonic: [0.3, 0.2, 0.7],
                ..base([0.0, -1.0, 0.0], -6.0, 1.8, 2.5, 1.5, 1.5)
            },
            CarriageKind::PocketBack => Self {
                accel_axes: [0.3, 1.0, 0.8],
                gyro_axes: [1.0, 0.2, 0.4],
                accel_harmonic: [0.7, 0.5, 0.1],
                gyro_harmonic: [0.6, 0.4, 0.0],
                ..base([0.0, 1.0, 0.0], -8.0, 1.8, 2.0, 1.2, 1.5)
            },
            CarriageKind::Backpack => Self {
                accel_axes: [0.3, 1.0, 0.3],
                gyro_axes: [0.5, 0.5, 1.0],
                accel_harmonic: [0.2, 0.9, 0.4],
                gyro_harmonic: [0.1, 0.3, 0.4],
                imu_noise_sigma: 0.04,
                ..base([0.0, 0.8, -0.6], -10.0, 1.8, 1.2, 0.4, 2.0)
            },
        }
    }

    pub fn defaults() -> Vec<Self> {
        CarriageKind::ALL.iter().map(|&k| Self::default_for(k)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.gravity_direction;
        let norm = libm::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
        let name = self.name.as_str();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "{name}: gravity_direction must be a unit vector (norm {norm})"
            )));
        }
        if !(self.body_attenuation <= 0.0) {
            return Err(Error::InvalidConfig(format!("{name}: body_attenuation must be <= 0 dB")));
        }
        let non_negative = [
            self.gait_frequency,
            self.accel_amplitude,
            self.gyro_amplitude,
            self.extra_fade_sigma,
            self.imu_noise_sigma,
        ];
        if non_negative.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "{name}: frequencies, amplitudes and noise levels must be finite and >= 0"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentCount {
    pub environment: EnvironmentKind,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// RSSI at 1 m, dBm.
    pub tx_power: f64,
    pub rssi_rate: f64,
    pub imu_rate: f64,
    pub window_seconds: f64,
    pub proximity_threshold: f64,
    pub max_distance: f64,
    /// Coupling between stowed carriage and proximity, in `[0, 1]`.
    pub bias: f64,
    pub counts: Vec<EnvironmentCount>,
    pub rng_seed: u64,
    pub environments: Vec<EnvironmentProfile>,
    pub carriages: Vec<CarriageProfile>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tx_power: -59.0,
            rssi_rate: 10.0,
            imu_rate: 50.0,
            window_seconds: 5.0,
            proximity_threshold: 2.0,
            max_distance: 4.0,
            bias: 0.0,
            counts: EnvironmentKind::ALL
                .iter()
                .map(|&environment| EnvironmentCount {
                    environment,
                    records: 100,
                })
                .collect(),
            rng_seed: 0,
            environments: EnvironmentProfile::defaults(),
            carriages: CarriageProfile::defaults(),
        }
    }
}

impl SimConfig {
    /// Same config with `total` records split evenly over the three venues.
    pub fn with_total_records(mut self, total: usize) -> Self {
        let per = total / EnvironmentKind::ALL.len();
        let extra = total % EnvironmentKind::ALL.len();
        self.counts = EnvironmentKind::ALL
            .iter()
            .enumerate()
            .map(|(i, &environment)| EnvironmentCount {
                environment,
                records: per + usize::from(i < extra),
            })
            .collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.bias) {
            return Err(Error::InvalidConfig(format!("bias must be in [0, 1], got {}", self.bias)));
        }
        if !(self.rssi_rate > 0.0 && self.imu_rate > 0.0 && self.window_seconds > 0.0) {
            return Err(Error::InvalidConfig("rates and window length must be positive".into()));
        }
        if !(self.proximity_threshold < self.max_distance) {
            return Err(Error::InvalidConfig(
                "proximity_threshold must be below max_distance".into(),
            ));
        }
        if !(self.max_distance > MIN_SAMPLE_DISTANCE) {
            return Err(Error::InvalidConfig(format!(
                "max_distance must exceed {MIN_SAMPLE_DISTANCE} m"
            )));
        }
        for e in &self.environments {
            e.validate()?;
        }
        for c in &self.carriages {
            c.validate()?;
        }
        for count in &self.counts {
            self.environment(count.environment)?;
        }
        for kind in CarriageKind::ALL {
            self.carriage(kind)?;
        }
        Ok(())
    }

    pub fn environment(&self, kind: EnvironmentKind) -> Result<&EnvironmentProfile> {
        self.environments
            .iter()
            .find(|e| e.name == kind)
            .ok_or_else(|| Error::InvalidConfig(format!("no profile for environment {}", kind.as_str())))
    }

    pub fn carriage(&self, kind: CarriageKind) -> Result<&CarriageProfile> {
        self.carriages
            .iter()
            .find(|c| c.name == kind)
            .ok_or_else(|| Error::InvalidConfig(format!("no profile for carriage {}", kind.as_str())))
    }

    /// Probability of a stowed carriage state given the proximity label.
    pub fn stowed_probability(&self, proximity: u8) -> f64 {
        if proximity == 1 {
            0.5 + self.bias / 2.0
        } else {
            0.5 - self.bias / 2.0
        }
    }
}

/// Three synchronous 3-axis IMU series.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuWindow {
    pub gravity: Vec<[f64; 3]>,
    pub linear_acceleration: Vec<[f64; 3]>,
    pub angular_velocity: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub environment: EnvironmentKind,
    pub carriage: CarriageKind,
    pub distance: f64,
    pub proximity: u8,
    pub rssi: Vec<f64>,
    pub imu: ImuWindow,
}

/// Log-distance path loss: `tx - 10 n log10(d)`.
pub fn path_loss_mean_rssi(distance: f64, tx: f64, n: f64) -> Result<f64> {
    if !(distance >= MIN_MODEL_DISTANCE) {
        return Err(Error::Domain(format!(
            "path loss model needs distance >= {MIN_MODEL_DISTANCE} m, got {distance}"
        )));
    }
    Ok(tx - 10.0 * n * libm::log10(distance))
}

/// Proximity label for a true distance; the boundary counts as proximate.
#[inline]
pub fn proximity_label(distance: f64, threshold: f64) -> u8 {
    u8::from(distance <= threshold)
}

fn sample_count(duration: f64, rate: f64) -> Result<usize> {
    if !(duration > 0.0 && rate > 0.0) {
        return Err(Error::Domain(format!(
            "duration and rate must be positive (got {duration} s at {rate} Hz)"
        )));
    }
    Ok(libm::round(duration * rate) as usize)
}

#[inline]
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Envelope power of one Rician fading draw with unit mean power, in dB.
fn rician_fade_db<R: Rng + ?Sized>(k: f64, rng: &mut R) -> f64 {
    if k.is_infinite() {
        return 0.0;
    }
    let los = libm::sqrt(k / (k + 1.0));
    let scatter = libm::sqrt(1.0 / (2.0 * (k + 1.0)));
    let re = los + scatter * normal(rng);
    let im = scatter * normal(rng);
    10.0 * libm::log10(re * re + im * im)
}

/// RSSI series for one window at a fixed distance.
///
/// Each sample is the path loss mean plus body attenuation, Rician fading,
/// and per-sample body fading; log-normal shadowing is drawn once per
/// window. Values are clamped to `[-120, 0]` dBm.
pub fn simulate_rssi<R: Rng + ?Sized>(
    distance: f64,
    tx: f64,
    env: &EnvironmentProfile,
    carriage: &CarriageProfile,
    duration: f64,
    rate: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = sample_count(duration, rate)?;
    let mean = path_loss_mean_rssi(distance, tx, env.path_loss_exponent)? + carriage.body_attenuation;
    let shadow = env.shadowing_sigma * normal(rng);
    let rssi = (0..n)
        .map(|_| {
            let fade = rician_fade_db(env.rician_k, rng);
            let body = carriage.extra_fade_sigma * normal(rng);
            (mean + fade + shadow + body).clamp(RSSI_FLOOR, RSSI_CEILING)
        })
        .collect();
    Ok(rssi)
}

#[inline]
fn gait_wave(theta: f64, harmonic: f64) -> f64 {
    libm::sin(theta) + harmonic * libm::cos(2.0 * theta)
}

/// IMU window for a carriage profile.
pub fn simulate_imu<R: Rng + ?Sized>(
    carriage: &CarriageProfile,
    duration: f64,
    rate: f64,
    rng: &mut R,
) -> Result<ImuWindow> {
    let n = sample_count(duration, rate)?;
    let amp_scale = 1.0 + GAIT_JITTER * normal(rng);
    let freq = carriage.gait_frequency * (1.0 + GAIT_JITTER * normal(rng));
    let phase = 2.0 * PI * rng.random::<f64>();
    let sigma = carriage.imu_noise_sigma;
    let accel = carriage.accel_amplitude * amp_scale;
    let gyro = carriage.gyro_amplitude * amp_scale;

    let mut window = ImuWindow {
        gravity: Vec::with_capacity(n),
        linear_acceleration: Vec::with_capacity(n),
        angular_velocity: Vec::with_capacity(n),
    };
    for i in 0..n {
        let t = i as f64 / rate;
        let theta = 2.0 * PI * freq * t + phase;
        let mut g = [0.0; 3];
        let mut la = [0.0; 3];
        let mut av = [0.0; 3];
        for a in 0..3 {
            g[a] = STANDARD_GRAVITY * carriage.gravity_direction[a] + sigma * normal(rng);
            la[a] = accel * carriage.accel_axes[a] * gait_wave(theta, carriage.accel_harmonic[a])
                + sigma * normal(rng);
            av[a] = gyro
                * carriage.gyro_axes[a]
                * gait_wave(theta + PI / 2.0, carriage.gyro_harmonic[a])
                + sigma * normal(rng);
        }
        window.gravity.push(g);
        window.linear_acceleration.push(la);
        window.angular_velocity.push(av);
    }
    Ok(window)
}

/// Random stream for record `index` under `seed`.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generates record `index` of the dataset, drawn in `environment`.
pub fn generate_record(config: &SimConfig, environment: EnvironmentKind, index: usize) -> Result<SampleRecord> {
    let mut rng = record_rng(config.rng_seed, index as u64);
    let env = config.environment(environment)?;
    let distance = MIN_SAMPLE_DISTANCE + (config.max_distance - MIN_SAMPLE_DISTANCE) * rng.random::<f64>();
    let proximity = proximity_label(distance, config.proximity_threshold);
    let stowed = rng.random::<f64>() < config.stowed_probability(proximity);
    let group: &[CarriageKind] = if stowed {
        &CarriageKind::STOWED
    } else {
        &CarriageKind::HAND
    };
    let kind = group[rng.random_range(0..group.len())];
    let carriage = config.carriage(kind)?;
    let rssi = simulate_rssi(
        distance,
        config.tx_power,
        env,
        carriage,
        config.window_seconds,
        config.rssi_rate,
        &mut rng,
    )?;
    let imu = simulate_imu(carriage, config.window_seconds, config.imu_rate, &mut rng)?;
    Ok(SampleRecord {
        id: format!("{}-{:06}", environment.as_str(), index),
        environment,
        carriage: kind,
        distance,
        proximity,
        rssi,
        imu,
    })
}

/// Generates the whole dataset: venues in `counts` order, records numbered
/// consecutively across venues.
pub fn generate_dataset(config: &SimConfig) -> Result<Vec<SampleRecord>> {
    config.validate()?;
    let total = config.counts.iter().map(|c| c.records).sum();
    let mut records = Vec::with_capacity(total);
    let mut index = 0;
    for count in &config.counts {
        for _ in 0..count.records {
            records.push(generate_record(config, count.environment, index)?);
            index += 1;
        }
    }
    Ok(records)
}

/// Population standard deviation; used by tests and diagnostics.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
}
