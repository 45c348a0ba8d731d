//! Output artifacts: record tables, model dumps, comparisons, coefficient
//! distributions and per-algorithm summaries.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_compare, ComparisonResult, Metric};
use super::coefficients::CoefficientSummary;
use super::EvaluationRecord;
use crate::data::{csv_err, ModalitySelection};
use crate::error::{Error, Result};
use crate::models::Algorithm;
use crate::stats::median;

pub fn write_records_csv(records: &[EvaluationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "repetition",
        "outer_fold",
        "algorithm",
        "modality",
        "hyperparameters",
        "inner_rmse",
        "rmse",
        "r2",
        "r",
        "n_train",
        "n_test",
        "nonconverged_fits",
        "model_line",
    ])
    .map_err(|e| csv_err(path, e))?;
    for (i, r) in records.iter().enumerate() {
        w.write_record([
            r.repetition.to_string(),
            r.outer_fold.to_string(),
            r.algorithm.to_string(),
            r.modality.to_string(),
            r.hyperparameters.label(),
            r.inner_rmse.to_string(),
            r.rmse.to_string(),
            r.r2.to_string(),
            r.r.map_or_else(|| "NA".to_string(), |v| v.to_string()),
            r.n_train.to_string(),
            r.n_test.to_string(),
            r.nonconverged_fits.to_string(),
            (i + 1).to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One full record (including its model) per line.
pub fn write_records_jsonl(records: &[EvaluationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_records_jsonl(path: impl AsRef<Path>) -> Result<Vec<EvaluationRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?,
        );
    }
    Ok(out)
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_comparison_json(results: &[ComparisonResult], path: impl AsRef<Path>) -> Result<()> {
    write_json(results, path.as_ref())
}

pub fn write_coefficients_csv(
    summary: &[CoefficientSummary],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "feature",
        "median",
        "q1",
        "q3",
        "iqr",
        "n_models",
        "n_zero",
        "nonzero_median",
    ])
    .map_err(|e| csv_err(path, e))?;
    for s in summary {
        w.write_record([
            s.feature.clone(),
            s.median.to_string(),
            s.q1.to_string(),
            s.q3.to_string(),
            s.iqr().to_string(),
            s.n_models.to_string(),
            s.n_zero.to_string(),
            s.nonzero_median.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Median metrics of one (algorithm, modality) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub modality: ModalitySelection,
    pub n_records: usize,
    pub median_rmse: f64,
    pub median_r2: f64,
    /// Median over records with a defined `r`.
    pub median_r: Option<f64>,
    pub n_r_undefined: usize,
    pub nonconverged_fits: usize,
}

/// Rows in algorithm then modality order, for cells present in `records`.
pub fn summarize(records: &[EvaluationRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for algorithm in Algorithm::ALL {
        for modality in ModalitySelection::ALL {
            let cell: Vec<&EvaluationRecord> = records
                .iter()
                .filter(|r| r.algorithm == algorithm && r.modality == modality)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let rmse: Vec<f64> = cell.iter().map(|r| r.rmse).collect();
            let r2: Vec<f64> = cell.iter().map(|r| r.r2).collect();
            let r: Vec<f64> = cell.iter().filter_map(|r| r.r).collect();
            rows.push(SummaryRow {
                algorithm,
                modality,
                n_records: cell.len(),
                median_rmse: median(&rmse),
                median_r2: median(&r2),
                median_r: (!r.is_empty()).then(|| median(&r)),
                n_r_undefined: cell.len() - r.len(),
                nonconverged_fits: cell.iter().map(|r| r.nonconverged_fits).sum(),
            });
        }
    }
    rows
}

pub fn write_summary_json(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    write_json(rows, path.as_ref())
}

/// Records of one (algorithm, modality) cell, in file order.
pub fn select_records(
    records: &[EvaluationRecord],
    algorithm: Algorithm,
    modality: ModalitySelection,
) -> Vec<EvaluationRecord> {
    records
        .iter()
        .filter(|r| r.algorithm == algorithm && r.modality == modality)
        .cloned()
        .collect()
}

/// Every metric for every requested modality pair, with one seed shared
/// across comparisons.
pub fn compare_modalities(
    records: &[EvaluationRecord],
    algorithm: Algorithm,
    pairs: &[(ModalitySelection, ModalitySelection)],
    metrics: &[Metric],
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<ComparisonResult>> {
    let mut out = Vec::new();
    for &(a, b) in pairs {
        let ra = select_records(records, algorithm, a);
        let rb = select_records(records, algorithm, b);
        if ra.is_empty() || rb.is_empty() {
            return Err(Error::UnpairedRecords(format!(
                "no {algorithm} records for {a} or {b}"
            )));
        }
        for &m in metrics {
            out.push(bootstrap_compare(
                &ra,
                &rb,
                m,
                &format!("{a} - {b}"),
                n_resamples,
                seed,
            )?);
        }
    }
    Ok(out)
}

/// Modality pairs reported by default.
pub const DEFAULT_PAIRS: [(ModalitySelection, ModalitySelection); 3] = [
    (ModalitySelection::Visual, ModalitySelection::Multimodal),
    (ModalitySelection::Linguistic, ModalitySelection::Multimodal),
    (ModalitySelection::Visual, ModalitySelection::Linguistic),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub records_csv: String,
    pub records_jsonl: String,
    pub summary_json: String,
}

/// Writes `records.csv`, `models.jsonl` and `summary.json` into `dir`.
pub fn write_evaluation(records: &[EvaluationRecord], dir: impl AsRef<Path>) -> Result<Artifacts> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let a = Artifacts {
        records_csv: "records.csv".into(),
        records_jsonl: "models.jsonl".into(),
        summary_json: "summary.json".into(),
    };
    write_records_csv(records, dir.join(&a.records_csv))?;
    write_records_jsonl(records, dir.join(&a.records_jsonl))?;
    write_summary_json(&summarize(records), dir.join(&a.summary_json))?;
    Ok(a)
}
