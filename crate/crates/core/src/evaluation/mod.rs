//! The experimental harness: hyperparameter grids, group-stratified nested
//! cross-validation, metrics, paired bootstrap comparison of modalities and
//! coefficient distributions.

mod bootstrap;
mod coefficients;
mod cv;
mod folds;
mod grid;
mod metrics;
mod report;

pub use bootstrap::{
    bootstrap_compare, bootstrap_median, paired_differences, resample_medians, BootstrapSummary,
    ComparisonResult, Metric, DEFAULT_RESAMPLES,
};
pub use coefficients::{coefficient_summary, CoefficientSummary};
pub use cv::{folds_for_repetition, nested_cv, CvOptions, EvaluationRecord};
pub use folds::{make_folds, FoldAssignment};
pub use grid::{ElasticNetGrid, HyperParamGrid, MlpGrid, SvrGrid};
pub use metrics::{metrics, Metrics};
pub use report::{
    compare_modalities, read_records_jsonl, select_records, summarize, write_coefficients_csv,
    write_comparison_json, write_evaluation, write_records_csv, write_records_jsonl,
    write_summary_json, Artifacts, SummaryRow, DEFAULT_PAIRS,
};
