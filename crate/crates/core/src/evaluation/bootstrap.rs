//! Paired percentile bootstrap of the median fold-level difference.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvaluationRecord;
use crate::error::{Error, Result};
use crate::stats::{median, percentile_sorted};

pub const DEFAULT_RESAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Rmse,
    R2,
    R,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Rmse, Metric::R2, Metric::R];

    pub fn of(self, record: &EvaluationRecord) -> Option<f64> {
        match self {
            Metric::Rmse => Some(record.rmse),
            Metric::R2 => Some(record.r2),
            Metric::R => record.r,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::R2 => "r2",
            Metric::R => "r",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rmse" => Ok(Metric::Rmse),
            "r2" => Ok(Metric::R2),
            "r" => Ok(Metric::R),
            other => Err(Error::Invalid(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub metric: Metric,
    /// `a - b` label, e.g. `visual - multimodal`.
    pub pair: String,
    pub n_pairs: usize,
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub n_resamples: usize,
}

/// Differences `a - b` for records paired by (repetition, outer fold), in
/// the order of `a`. Pairs where either side has an undefined metric are
/// skipped.
pub fn paired_differences(
    a: &[EvaluationRecord],
    b: &[EvaluationRecord],
    metric: Metric,
) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::UnpairedRecords(format!(
            "{} records vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut index: HashMap<(usize, usize), &EvaluationRecord> = HashMap::new();
    for r in b {
        if index.insert((r.repetition, r.outer_fold), r).is_some() {
            return Err(Error::UnpairedRecords(format!(
                "duplicate record for repetition {}, fold {}",
                r.repetition, r.outer_fold
            )));
        }
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(a.len());
    for r in a {
        let key = (r.repetition, r.outer_fold);
        if !seen.insert(key) {
            return Err(Error::UnpairedRecords(format!(
                "duplicate record for repetition {}, fold {}",
                key.0, key.1
            )));
        }
        let other = index.get(&key).ok_or_else(|| {
            Error::UnpairedRecords(format!(
                "no partner for repetition {}, fold {}",
                key.0, key.1
            ))
        })?;
        if let (Some(x), Some(y)) = (metric.of(r), metric.of(other)) {
            out.push(x - y);
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no pairs with a defined {metric}"
        )));
    }
    Ok(out)
}

/// Median of each of `n_resamples` with-replacement resamples of `d`.
pub fn resample_medians(d: &[f64], n_resamples: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = vec![0.0; d.len()];
    (0..n_resamples)
        .map(|_| {
            for s in sample.iter_mut() {
                *s = d[rng.random_range(0..d.len())];
            }
            median(&sample)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

/// Observed median, 2.5/97.5 percentile interval and two-sided p,
/// `2 min(P(m* <= 0), P(m* >= 0))` clamped to `[1/n_resamples, 1]`.
pub fn bootstrap_median(d: &[f64], n_resamples: usize, seed: u64) -> Result<BootstrapSummary> {
    if d.is_empty() {
        return Err(Error::EmptyInput("no differences to resample".into()));
    }
    if n_resamples == 0 {
        return Err(Error::Config("n_resamples must be positive".into()));
    }
    let mut medians = resample_medians(d, n_resamples, seed);
    medians.sort_by(f64::total_cmp);
    let m = n_resamples as f64;
    let below = medians.iter().filter(|&&v| v <= 0.0).count() as f64 / m;
    let above = medians.iter().filter(|&&v| v >= 0.0).count() as f64 / m;
    Ok(BootstrapSummary {
        delta: median(d),
        ci_low: percentile_sorted(&medians, 2.5),
        ci_high: percentile_sorted(&medians, 97.5),
        p_value: (2.0 * below.min(above)).clamp(1.0 / m, 1.0),
    })
}

pub fn bootstrap_compare(
    a: &[EvaluationRecord],
    b: &[EvaluationRecord],
    metric: Metric,
    pair: &str,
    n_resamples: usize,
    seed: u64,
) -> Result<ComparisonResult> {
    let d = paired_differences(a, b, metric)?;
    let s = bootstrap_median(&d, n_resamples, seed)?;
    Ok(ComparisonResult {
        metric,
        pair: pair.to_string(),
        n_pairs: d.len(),
        delta: s.delta,
        ci_low: s.ci_low,
        ci_high: s.ci_high,
        p_value: s.p_value,
        n_resamples,
    })
}
