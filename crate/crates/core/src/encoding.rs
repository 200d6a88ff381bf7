//! Window encoding: RSSI histogram `R` and carriage feature vector `C`.
//!
//! Carriage feature layout (33 values):
//!
//! | index   | content                                                    |
//! |---------|------------------------------------------------------------|
//! | 0..3    | gravity mean, x y z                                        |
//! | 3..18   | linear acceleration, per axis x y z: energy, variance,     |
//! |         | skewness, kurtosis, entropy                                |
//! | 18..33  | angular velocity, same per-axis layout                     |

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::simulator::ImuWindow;
use crate::{Error, Result};

pub const CARRIAGE_DIM: usize = 3 + 2 * 3 * STATS_PER_AXIS;
pub const STATS_PER_AXIS: usize = 5;
/// Buckets of the empirical distribution behind [`stat_entropy`].
pub const ENTROPY_BUCKETS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistogramSpec {
    pub phi_min: f64,
    pub phi_max: f64,
    pub delta: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            phi_min: -100.0,
            phi_max: 0.0,
            delta: 4.0,
        }
    }
}

impl HistogramSpec {
    pub fn new(phi_min: f64, phi_max: f64, delta: f64) -> Result<Self> {
        let spec = Self {
            phi_min,
            phi_max,
            delta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi_max > self.phi_min) || !(self.delta > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "histogram needs phi_max > phi_min and delta > 0 (got {}..{} step {})",
                self.phi_min,
                self.phi_max,
                self.delta
            )));
        }
        let ratio = (self.phi_max - self.phi_min) / self.delta;
        if (ratio - libm::round(ratio)).abs() > 1e-9 {
            return Err(Error::InvalidConfig(alloc::format!(
                "delta {} does not divide the range {}..{}",
                self.delta,
                self.phi_min,
                self.phi_max
            )));
        }
        Ok(())
    }

    /// Number of bins `n = (phi_max - phi_min) / delta`.
    pub fn bins(&self) -> usize {
        libm::round((self.phi_max - self.phi_min) / self.delta) as usize
    }

    /// Bin of one RSSI value; out-of-range values clamp to the edge bins.
    #[inline]
    pub fn bin_of(&self, rssi: f64) -> usize {
        let n = self.bins();
        let raw = libm::floor((rssi - self.phi_min) / self.delta);
        if raw < 0.0 {
            0
        } else {
            (raw as usize).min(n - 1)
        }
    }
}

/// Normalized RSSI bucket frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub spec: HistogramSpec,
    pub bins: Vec<f64>,
}

pub fn histogramize(rssi: &[f64], spec: &HistogramSpec) -> Result<Histogram> {
    spec.validate()?;
    if rssi.is_empty() {
        return Err(Error::EmptyWindow("no RSSI samples in window"));
    }
    let mut counts = vec![0usize; spec.bins()];
    for &v in rssi {
        counts[spec.bin_of(v)] += 1;
    }
    let total = rssi.len() as f64;
    Ok(Histogram {
        spec: *spec,
        bins: counts.into_iter().map(|c| c as f64 / total).collect(),
    })
}

fn check_len(series: &[f64]) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: series.len(),
        });
    }
    Ok(())
}

fn mean(series: &[f64]) -> f64 {
    series.iter().sum::<f64>() / series.len() as f64
}

/// `(1/N) Σ x²`
pub fn stat_energy(series: &[f64]) -> Result<f64> {
    check_len(series)?;
    Ok(series.iter().map(|x| x * x).sum::<f64>() / series.len() as f64)
}

/// Population variance `(1/N) Σ (x - x̄)²`.
pub fn stat_variance(series: &[f64]) -> Result<f64> {
    check_len(series)?;
    let m = mean(series);
    Ok(series.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / series.len() as f64)
}

/// `E[((x - x̄)/σ)^k]` with the σ = 0 case mapped to 0.
fn standardized_moment(series: &[f64], k: i32) -> Result<f64> {
    let var = stat_variance(series)?;
    if var == 0.0 {
        return Ok(0.0);
    }
    let m = mean(series);
    let sd = libm::sqrt(var);
    Ok(series.iter().map(|x| libm::pow((x - m) / sd, k as f64)).sum::<f64>() / series.len() as f64)
}

pub fn stat_skewness(series: &[f64]) -> Result<f64> {
    standardized_moment(series, 3)
}

/// Non-excess kurtosis (a Gaussian scores 3).
pub fn stat_kurtosis(series: &[f64]) -> Result<f64> {
    standardized_moment(series, 4)
}

/// Mean self-information of the min-max normalized series, with
/// probabilities taken from a 16-bucket histogram of the series itself.
pub fn stat_entropy(series: &[f64]) -> Result<f64> {
    check_len(series)?;
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if hi == lo {
        return Ok(0.0);
    }
    let bucket = |x: f64| {
        let u = (x - lo) / (hi - lo);
        ((u * ENTROPY_BUCKETS as f64) as usize).min(ENTROPY_BUCKETS - 1)
    };
    let mut counts = [0usize; ENTROPY_BUCKETS];
    for &x in series {
        counts[bucket(x)] += 1;
    }
    let n = series.len() as f64;
    let info: f64 = series
        .iter()
        .map(|&x| -libm::log(counts[bucket(x)] as f64 / n))
        .sum();
    Ok(info / n)
}

/// The 33-value carriage feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CarriageFeatures(Vec<f64>);

impl CarriageFeatures {
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.len() != CARRIAGE_DIM {
            return Err(Error::DimensionMismatch {
                expected: CARRIAGE_DIM,
                got: values.len(),
            });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn gravity_mean(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

fn axis(series: &[[f64; 3]], a: usize) -> Vec<f64> {
    series.iter().map(|v| v[a]).collect()
}

pub fn encode_carriage(imu: &ImuWindow) -> Result<CarriageFeatures> {
    let n = imu.gravity.len();
    if n == 0 {
        return Err(Error::EmptyWindow("no IMU samples in window"));
    }
    for len in [imu.linear_acceleration.len(), imu.angular_velocity.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let mut out = Vec::with_capacity(CARRIAGE_DIM);
    for a in 0..3 {
        out.push(mean(&axis(&imu.gravity, a)));
    }
    for source in [&imu.linear_acceleration, &imu.angular_velocity] {
        for a in 0..3 {
            let x = axis(source, a);
            out.push(stat_energy(&x)?);
            out.push(stat_variance(&x)?);
            out.push(stat_skewness(&x)?);
            out.push(stat_kurtosis(&x)?);
            out.push(stat_entropy(&x)?);
        }
    }
    debug_assert_eq!(out.len(), CARRIAGE_DIM);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite carriage feature".into()));
    }
    Ok(CarriageFeatures(out))
}

/// Per-dimension standardization fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    /// Population mean/std per column; constant columns get std 1.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyGroup("cannot fit scaler on zero rows"))?;
        let dim = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = libm::sqrt(s / n);
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: values.len(),
            });
        }
        Ok(values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    /// Rounds the statistics to what a 32-bit model file can hold.
    pub fn round_to_f32(&mut self) {
        for v in self.mean.iter_mut().chain(self.std.iter_mut()) {
            *v = *v as f32 as f64;
        }
    }
}

/// Classifier input `[R | standardized C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub fn concat_features(h: &Histogram, c: &CarriageFeatures, scaler: &FeatureScaler) -> Result<FeatureVector> {
    let scaled = scaler.transform(c.as_slice())?;
    let mut v = Vec::with_capacity(h.bins.len() + scaled.len());
    v.extend_from_slice(&h.bins);
    v.extend(scaled);
    Ok(FeatureVector(v))
}

/// Unscaled encoding of one window.
pub fn encode_window(rssi: &[f64], imu: &ImuWindow, spec: &HistogramSpec) -> Result<(Histogram, CarriageFeatures)> {
    Ok((histogramize(rssi, spec)?, encode_carriage(imu)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn default_spec_has_25_bins() {
        assert_eq!(HistogramSpec::default().bins(), 25);
    }

    #[test]
    fn indivisible_range_is_rejected() {
        assert!(HistogramSpec::new(-100.0, 0.0, 3.0).is_err());
        assert!(HistogramSpec::new(0.0, -100.0, 4.0).is_err());
    }

    #[test]
    fn constant_window_lands_in_one_bin() {
        let h = histogramize(&[-59.0, -59.0, -59.0], &HistogramSpec::default()).unwrap();
        assert_eq!(h.bins.len(), 25);
        for (i, &v) in h.bins.iter().enumerate() {
            assert_eq!(v, if i == 10 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn out_of_range_values_clamp_to_edge_bins() {
        let h = histogramize(&[-101.0, -1.0], &HistogramSpec::default()).unwrap();
        assert_eq!(h.bins[0], 0.5);
        assert_eq!(h.bins[24], 0.5);
        let h = histogramize(&[0.0, 5.0], &HistogramSpec::default()).unwrap();
        assert_eq!(h.bins[24], 1.0);
    }

    #[test]
    fn empty_window_is_an_error() {
        assert!(matches!(
            histogramize(&[], &HistogramSpec::default()),
            Err(Error::EmptyWindow(_))
        ));
    }

    #[test]
    fn constant_series_statistics() {
        let x = [1.0; 4];
        assert_eq!(stat_variance(&x).unwrap(), 0.0);
        assert_eq!(stat_skewness(&x).unwrap(), 0.0);
        assert_eq!(stat_kurtosis(&x).unwrap(), 0.0);
        assert_eq!(stat_entropy(&x).unwrap(), 0.0);
    }

    #[test]
    fn energy_example() {
        assert_eq!(stat_energy(&[3.0, -4.0]).unwrap(), 12.5);
    }

    #[test]
    fn short_series_are_rejected() {
        for f in [stat_energy, stat_variance, stat_skewness, stat_kurtosis, stat_entropy] {
            assert!(matches!(f(&[1.0]), Err(Error::TooShort { .. })));
        }
    }

    #[test]
    fn gaussian_kurtosis_is_three() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let k = stat_kurtosis(&x).unwrap();
        assert!((k - 3.0).abs() < 0.15, "{k}");
    }

    #[test]
    fn entropy_examples() {
        // 16 distinct values spread over all buckets, 4 copies each.
        let uniform: Vec<f64> = (0..64).map(|i| (i % 16) as f64).collect();
        assert!((stat_entropy(&uniform).unwrap() - libm::log(16.0)).abs() < 1e-12);
        let two = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert!((stat_entropy(&two).unwrap() - core::f64::consts::LN_2).abs() < 1e-12);
    }

    fn still_window(n: usize) -> ImuWindow {
        ImuWindow {
            gravity: vec![[0.0, 0.0, 9.81]; n],
            linear_acceleration: vec![[0.0; 3]; n],
            angular_velocity: vec![[0.0; 3]; n],
        }
    }

    #[test]
    fn still_window_features() {
        let c = encode_carriage(&still_window(50)).unwrap();
        assert_eq!(c.as_slice().len(), 33);
        assert_eq!(c.gravity_mean(), [0.0, 0.0, 9.81]);
        assert!(c.as_slice()[3..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_imu_lengths_are_rejected() {
        let mut w = still_window(10);
        w.angular_velocity.pop();
        assert!(matches!(encode_carriage(&w), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(encode_carriage(&still_window(0)), Err(Error::EmptyWindow(_))));
    }

    #[test]
    fn swinging_hand_has_more_acceleration_energy() {
        use crate::simulator::{record_rng, simulate_imu, CarriageKind, CarriageProfile};
        let energy = |kind| {
            let w = simulate_imu(&CarriageProfile::default_for(kind), 5.0, 50.0, &mut record_rng(3, 0)).unwrap();
            let c = encode_carriage(&w).unwrap();
            // linear-acceleration energies sit at 3, 8, 13
            c.as_slice()[3] + c.as_slice()[8] + c.as_slice()[13]
        };
        assert!(energy(CarriageKind::HandSwing) > energy(CarriageKind::HandStatic));
    }

    #[test]
    fn concatenation_layout_and_scaling() {
        use crate::simulator::{generate_dataset, SimConfig};
        let cfg = SimConfig {
            rng_seed: 8,
            ..SimConfig::default()
        }
        .with_total_records(60);
        let records = generate_dataset(&cfg).unwrap();
        let spec = HistogramSpec::default();
        let encoded: Vec<_> = records.iter().map(|r| encode_window(&r.rssi, &r.imu, &spec).unwrap()).collect();
        let carriage: Vec<&[f64]> = encoded.iter().map(|(_, c)| c.as_slice()).collect();
        let scaler = FeatureScaler::fit(&carriage).unwrap();
        let vectors: Vec<FeatureVector> = encoded
            .iter()
            .map(|(h, c)| concat_features(h, c, &scaler).unwrap())
            .collect();
        for v in &vectors {
            assert_eq!(v.len(), 58);
            assert!((v.as_slice()[..25].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for d in 25..58 {
            let col: Vec<f64> = vectors.iter().map(|v| v.as_slice()[d]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let sd = libm::sqrt(col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64);
            assert!(m.abs() < 1e-6);
            assert!((sd - 1.0).abs() < 1e-6, "dim {d}: {sd}");
        }
        let short = FeatureScaler::fit(&[[1.0, 2.0]]).unwrap();
        assert!(concat_features(&encoded[0].0, &encoded[0].1, &short).is_err());
    }

    proptest! {
        #[test]
        fn histogram_sums_to_one(rssi in prop::collection::vec(-130.0f64..10.0, 1..200)) {
            let h = histogramize(&rssi, &HistogramSpec::default()).unwrap();
            prop_assert!((h.bins.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(h.bins.iter().all(|&b| b >= 0.0));
        }

        #[test]
        fn histogram_ignores_order(mut rssi in prop::collection::vec(-110.0f64..0.0, 1..100), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let spec = HistogramSpec::default();
            let a = histogramize(&rssi, &spec).unwrap();
            rssi.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, histogramize(&rssi, &spec).unwrap());
        }

        #[test]
        fn shifting_by_delta_moves_one_bin(cells in prop::collection::vec((0usize..23, 0.1f64..0.9), 1..60)) {
            let spec = HistogramSpec::default();
            let rssi: Vec<f64> = cells.iter().map(|&(k, f)| spec.phi_min + (k as f64 + f) * spec.delta).collect();
            let shifted: Vec<f64> = rssi.iter().map(|v| v + spec.delta).collect();
            let a = histogramize(&rssi, &spec).unwrap();
            let b = histogramize(&shifted, &spec).unwrap();
            prop_assert_eq!(b.bins[0], 0.0);
            for i in 0..24 {
                prop_assert_eq!(a.bins[i], b.bins[i + 1]);
            }
        }

        #[test]
        fn symmetric_series_have_zero_skew(half in prop::collection::vec(-50.0f64..50.0, 1..50), center in -10.0f64..10.0) {
            let series: Vec<f64> = half.iter().flat_map(|&d| [center + d, center - d]).collect();
            prop_assert!(stat_skewness(&series).unwrap().abs() < 1e-9);
        }

        #[test]
        fn variance_is_translation_invariant(x in prop::collection::vec(-10.0f64..10.0, 2..80), shift in -100.0f64..100.0) {
            let moved: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let a = stat_variance(&x).unwrap();
            let b = stat_variance(&moved).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + shift * shift));
        }

        #[test]
        fn energy_is_variance_plus_squared_mean(x in prop::collection::vec(-10.0f64..10.0, 2..80)) {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            let lhs = stat_energy(&x).unwrap();
            let rhs = stat_variance(&x).unwrap() + m * m;
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
