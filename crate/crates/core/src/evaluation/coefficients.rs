//! Distribution of linear-model coefficients across tuned models.

use serde::{Deserialize, Serialize};

use super::EvaluationRecord;
use crate::error::{Error, Result};
use crate::stats::percentile_sorted;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub feature: String,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub n_models: usize,
    pub n_zero: usize,
    /// False when the median is exactly 0; such features are left out of
    /// headline reports.
    pub nonzero_median: bool,
}

impl CoefficientSummary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Per-feature median and quartiles over all records, sorted by |median|
/// (largest first, ties by name).
pub fn coefficient_summary(records: &[EvaluationRecord]) -> Result<Vec<CoefficientSummary>> {
    let first = records
        .first()
        .ok_or_else(|| Error::EmptyInput("no records".into()))?;
    let names = &first.model.feature_names;
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(records.len()); names.len()];
    for r in records {
        if &r.model.feature_names != names {
            return Err(Error::MixedFeatureSets);
        }
        let coefs = r.model.coefficients().ok_or_else(|| {
            Error::Invalid(format!(
                "record ({}, {}) does not hold a linear model",
                r.repetition, r.outer_fold
            ))
        })?;
        for (col, &c) in columns.iter_mut().zip(coefs) {
            col.push(c);
        }
    }
    let mut out: Vec<CoefficientSummary> = names
        .iter()
        .zip(columns)
        .map(|(name, mut col)| {
            col.sort_by(f64::total_cmp);
            let median = percentile_sorted(&col, 50.0);
            CoefficientSummary {
                feature: name.clone(),
                median,
                q1: percentile_sorted(&col, 25.0),
                q3: percentile_sorted(&col, 75.0),
                n_models: col.len(),
                n_zero: col.iter().filter(|&&c| c == 0.0).count(),
                nonzero_median: median != 0.0,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.median
            .abs()
            .total_cmp(&a.median.abs())
            .then_with(|| a.feature.cmp(&b.feature))
    });
    Ok(out)
}
