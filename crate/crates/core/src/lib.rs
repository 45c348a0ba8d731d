//! Measuring and predicting perceived emotional expressiveness.
//!
//! The crate covers the whole pipeline from raw observer ratings to
//! interpretable predictive models:
//!
//! * [`reliability`]: average-measures agreement ICC for averaged ratings.
//! * [`latent`]: one-factor Bayesian CFA (Gibbs sampler), fit indices and
//!   factor scores used as labels.
//! * [`visual`]: face-tracking CSV parsing, window averaging, affine landmark
//!   alignment and kinematic summaries.
//! * [`linguistic`]: tokenization and lexicon category percentages.
//! * [`models`]: Elastic Net, epsilon-SVR (RBF) and MLP regressors.
//! * [`evaluation`]: stratified group folds, repeated nested cross-validation,
//!   metrics, paired bootstrap comparison and coefficient summaries.
//! * [`synth`]: seeded synthetic datasets for end-to-end checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod evaluation;
pub mod latent;
pub mod linguistic;
pub mod models;
pub mod reliability;
pub mod stats;
pub mod synth;
pub mod visual;

pub use data::{
    load_dataset, quartile_bins, write_dataset, zscore, Dataset, FeatureColumn, FeatureTable,
    GroupAssignment, LabelVector, Modality, ModalitySelection, RatingMatrix, TraitTable,
};
pub use error::{Error, Result};
