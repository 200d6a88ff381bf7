//! Detection metrics and the log-distance path loss baseline.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Window length used when chunking test data, in seconds.
pub const DEFAULT_WINDOW_SECONDS: f64 = 5.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, label: u8, decision: u8) {
        match (label == 1, decision == 1) {
            (true, true) => self.true_pos += 1,
            (false, true) => self.false_pos += 1,
            (false, false) => self.true_neg += 1,
            (true, false) => self.false_neg += 1,
        }
    }

    pub fn from_pairs(labels: &[u8], decisions: &[u8]) -> Result<Self> {
        if labels.len() != decisions.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                got: decisions.len(),
            });
        }
        let mut c = Self::default();
        for (&y, &d) in labels.iter().zip(decisions) {
            c.record(y, d);
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            true_pos: self.true_pos + other.true_pos,
            false_pos: self.false_pos + other.false_pos,
            true_neg: self.true_neg + other.true_neg,
            false_neg: self.false_neg + other.false_neg,
        }
    }

    /// `fn / (tp + fn)`, or 0 without positives.
    pub fn e_miss(&self) -> f64 {
        ratio(self.false_neg, self.true_pos + self.false_neg)
    }

    /// `fp / (fp + tn)`, or 0 without negatives.
    pub fn e_fa(&self) -> f64 {
        ratio(self.false_pos, self.false_pos + self.true_neg)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1; empty denominators give 0.
pub fn precision_recall_f1(c: &ConfusionCounts) -> (f64, f64, f64) {
    let precision = ratio(c.true_pos, c.true_pos + c.false_pos);
    let recall = ratio(c.true_pos, c.true_pos + c.false_neg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// `(w_miss·E_miss + w_fa·E_fa) / min(w_miss, w_fa)`
pub fn ndcf(c: &ConfusionCounts, w_miss: f64, w_fa: f64) -> Result<f64> {
    if !(w_miss > 0.0 && w_fa > 0.0) {
        return Err(Error::Domain("cost weights must be positive".into()));
    }
    if c.true_pos + c.false_neg == 0 {
        return Err(Error::SingleLabel { missing: 1 });
    }
    if c.false_pos + c.true_neg == 0 {
        return Err(Error::SingleLabel { missing: 0 });
    }
    Ok((w_miss * c.e_miss() + w_fa * c.e_fa()) / w_miss.min(w_fa))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub e_miss: f64,
    pub e_fa: f64,
    pub ndcf: f64,
}

impl Metrics {
    /// Metrics with unit cost weights.
    pub fn from_counts(counts: ConfusionCounts) -> Result<Self> {
        let ndcf = ndcf(&counts, 1.0, 1.0)?;
        let (precision, recall, f1) = precision_recall_f1(&counts);
        Ok(Self {
            counts,
            precision,
            recall,
            f1,
            e_miss: counts.e_miss(),
            e_fa: counts.e_fa(),
            ndcf,
        })
    }
}

/// Log-distance path loss model, `RSSI = tx − 10·n·log10(d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdplModel {
    /// Mean RSSI at one metre, dBm.
    pub tx: f64,
    pub exponent: f64,
}

impl LdplModel {
    pub fn distance(&self, mean_rssi: f64) -> f64 {
        libm::pow(10.0, (self.tx - mean_rssi) / (10.0 * self.exponent))
    }

    /// Smallest mean RSSI still classified as within `threshold` metres.
    pub fn rssi_at(&self, threshold: f64) -> f64 {
        self.tx - 10.0 * self.exponent * libm::log10(threshold)
    }
}

/// Least-squares fit over `(mean RSSI, distance)` pairs. With `fixed_tx`
/// only the exponent is fitted.
pub fn ldpl_fit(pairs: &[(f64, f64)], fixed_tx: Option<f64>) -> Result<LdplModel> {
    if pairs.len() < 2 {
        return Err(Error::Degenerate("path loss fit needs at least two pairs".into()));
    }
    if pairs.iter().any(|&(r, d)| !(d > 0.0 && d.is_finite() && r.is_finite())) {
        return Err(Error::Degenerate("path loss fit needs finite RSSI and positive distances".into()));
    }
    // Regress RSSI on x = −10·log10(d).
    let xs: Vec<f64> = pairs.iter().map(|&(_, d)| -10.0 * libm::log10(d)).collect();
    let ys: Vec<f64> = pairs.iter().map(|&(r, _)| r).collect();
    let (tx, exponent) = match fixed_tx {
        Some(tx) => {
            let sxx: f64 = xs.iter().map(|x| x * x).sum();
            if sxx == 0.0 {
                return Err(Error::Degenerate("all distances are 1 m".into()));
            }
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * (y - tx)).sum();
            (tx, sxy / sxx)
        }
        None => {
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            if sxx <= 1e-12 * n {
                return Err(Error::Degenerate("path loss fit needs distinct distances".into()));
            }
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let slope = sxy / sxx;
            (my - slope * mx, slope)
        }
    };
    if !(exponent > 0.0) {
        return Err(Error::Degenerate(alloc::format!(
            "fitted path loss exponent {exponent} is not positive"
        )));
    }
    Ok(LdplModel { tx, exponent })
}

/// 1 iff the distance implied by the mean RSSI is at most `threshold`.
///
/// The comparison is made on the RSSI side, which is equivalent because
/// distance decreases monotonically in RSSI, and keeps the boundary exact.
pub fn ldpl_detect(rssi: &[f64], model: &LdplModel, threshold: f64) -> Result<u8> {
    if rssi.is_empty() {
        return Err(Error::EmptyWindow("RSSI window"));
    }
    let mean = rssi.iter().sum::<f64>() / rssi.len() as f64;
    Ok(u8::from(mean >= model.rssi_at(threshold)))
}

/// Anything that maps a window to a 0/1 decision.
pub trait Detector<W: ?Sized> {
    fn detect(&mut self, window: &W) -> Result<u8>;
}

impl<W: ?Sized, F: FnMut(&W) -> Result<u8>> Detector<W> for F {
    fn detect(&mut self, window: &W) -> Result<u8> {
        self(window)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub decisions: Vec<u8>,
}

/// Runs `detector` over every window and scores it against `labels`.
pub fn evaluate<W, D: Detector<W>>(detector: &mut D, windows: &[W], labels: &[u8]) -> Result<Evaluation> {
    if windows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: windows.len(),
            got: labels.len(),
        });
    }
    let decisions = windows.iter().map(|w| detector.detect(w)).collect::<Result<Vec<u8>>>()?;
    let counts = ConfusionCounts::from_pairs(labels, &decisions)?;
    Ok(Evaluation {
        metrics: Metrics::from_counts(counts)?,
        decisions,
    })
}
