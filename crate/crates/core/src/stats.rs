//! Non-overlapping batch means for plain and ratio estimators.
//!
//! Observations are taken in their natural order (replication index or event
//! index) and split into contiguous batches of near-equal size. The batch
//! totals are treated as i.i.d., which absorbs short-range correlation
//! between neighbouring events.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BATCHES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub batches: usize,
}

impl Estimate {
    /// `|self − target| ≤ k·se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se
    }
}

fn batch_bounds(len: usize, batches: usize) -> Result<Vec<(usize, usize)>> {
    let batches = batches.min(len);
    if batches < 2 {
        return Err(Error::Estimation(format!(
            "need at least 2 batches, got {len} observations"
        )));
    }
    Ok((0..batches)
        .map(|b| (b * len / batches, (b + 1) * len / batches))
        .collect())
}

/// Mean of `values` with a batch-means standard error.
pub fn batch_mean(values: &[f64], batches: usize) -> Result<Estimate> {
    let bounds = batch_bounds(values.len(), batches)?;
    let means: Vec<f64> = bounds
        .iter()
        .map(|&(lo, hi)| values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64)
        .collect();
    let value = values.iter().sum::<f64>() / values.len() as f64;
    let b = means.len() as f64;
    let grand = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1.0);
    Ok(Estimate {
        value,
        se: (var / b).sqrt(),
        batches: means.len(),
    })
}

/// `Σ numerators / Σ denominators` with a delta-method standard error from
/// the batch totals.
pub fn batch_ratio(numerators: &[f64], denominators: &[f64], batches: usize) -> Result<Estimate> {
    if numerators.len() != denominators.len() {
        return Err(Error::Estimation(format!(
            "ratio estimator got {} numerators and {} denominators",
            numerators.len(),
            denominators.len()
        )));
    }
    let bounds = batch_bounds(numerators.len(), batches)?;
    let totals: Vec<(f64, f64)> = bounds
        .iter()
        .map(|&(lo, hi)| {
            (
                numerators[lo..hi].iter().sum::<f64>(),
                denominators[lo..hi].iter().sum::<f64>(),
            )
        })
        .collect();
    let total_num: f64 = numerators.iter().sum();
    let total_den: f64 = denominators.iter().sum();
    if total_den == 0.0 {
        return Err(Error::Estimation(
            "ratio estimator with zero denominator".into(),
        ));
    }
    let ratio = total_num / total_den;
    let b = totals.len() as f64;
    let mean_den = total_den / b;
    let resid: f64 = totals.iter().map(|&(y, x)| (y - ratio * x).powi(2)).sum();
    let var = resid / ((b - 1.0) * b * mean_den * mean_den);
    Ok(Estimate {
        value: ratio,
        se: var.sqrt(),
        batches: totals.len(),
    })
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 3 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = values
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum();
    cov / var
}

/// Standard error of a difference of independent estimates.
pub fn combined_se(parts: &[f64]) -> f64 {
    parts.iter().map(|s| s * s).sum::<f64>().sqrt()
}
