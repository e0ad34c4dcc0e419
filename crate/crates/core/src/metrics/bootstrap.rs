//! Percentile bootstrap.
//!
//! Resample `r` draws its indices from `ChaCha8Rng::seed_from_u64(seed)` with
//! the ChaCha stream set to `r`, so resamples are independent of evaluation
//! order and can run in parallel while staying bit-reproducible.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricError;

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Median,
    /// Fraction of values strictly greater than zero.
    FractionPositive,
}

impl Statistic {
    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            Statistic::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Statistic::Median => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                quantile_sorted(&v, 0.5)
            }
            Statistic::FractionPositive => values.iter().filter(|&&x| x > 0.0).count() as f64 / values.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n_resamples: usize,
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Indices of resample `r` over `n` items.
pub fn resample_indices(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    let dist = Uniform::new(0, n).expect("n > 0");
    dist.sample_iter(&mut rng).take(n).collect()
}

/// All resample index vectors; useful for corpus-level metrics that are not
/// a function of per-item values.
pub fn bootstrap_indices(n: usize, n_resamples: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..n_resamples).map(|r| resample_indices(n, seed, r)).collect()
}

fn check(n: usize, n_resamples: usize, level: f64) -> Result<(), MetricError> {
    if n == 0 {
        return Err(MetricError::EmptyCorpus);
    }
    if n_resamples == 0 {
        return Err(MetricError::InvalidArgument("n_resamples must be positive".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricError::InvalidArgument(format!("level {level} outside (0, 1)")));
    }
    Ok(())
}

fn interval(point: f64, mut stats: Vec<f64>, level: f64) -> Result<ConfidenceInterval, MetricError> {
    if !point.is_finite() || stats.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval {
        point,
        lower: quantile_sorted(&stats, alpha),
        upper: quantile_sorted(&stats, 1.0 - alpha),
        level,
        n_resamples: stats.len(),
    })
}

/// Percentile bootstrap for an arbitrary statistic of the resampled item
/// indices. `statistic` receives the identity index list for the point
/// estimate.
pub fn bootstrap_with<F>(n: usize, n_resamples: usize, level: f64, seed: u64, statistic: F) -> Result<ConfidenceInterval, MetricError>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    check(n, n_resamples, level)?;
    let identity: Vec<usize> = (0..n).collect();
    let point = statistic(&identity);
    let stats: Vec<f64> = (0..n_resamples)
        .into_par_iter()
        .map(|r| statistic(&resample_indices(n, seed, r)))
        .collect();
    interval(point, stats, level)
}

/// Percentile bootstrap CI of `statistic` over `values`.
pub fn bootstrap_ci(
    values: &[f64],
    statistic: Statistic,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<ConfidenceInterval, MetricError> {
    bootstrap_with(values.len(), n_resamples, level, seed, |idx| {
        let picked: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        statistic.apply(&picked)
    })
}
