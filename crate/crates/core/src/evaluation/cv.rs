//! Repeated nested cross-validation with grid search.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{make_folds, FoldAssignment};
use super::grid::HyperParamGrid;
use super::metrics::metrics;
use crate::data::{Dataset, ModalitySelection};
use crate::error::{Error, Result};
use crate::models::{fit, Algorithm, HyperParams, TrainedModel};
use crate::stats::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    pub n_reps: usize,
    pub k_outer: usize,
    pub k_inner: usize,
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    pub jobs: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            n_reps: 20,
            k_outer: 8,
            k_inner: 7,
            seed: 0,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub repetition: usize,
    pub outer_fold: usize,
    pub algorithm: Algorithm,
    pub modality: ModalitySelection,
    pub hyperparameters: HyperParams,
    /// Mean inner-validation RMSE of the chosen grid point.
    pub inner_rmse: f64,
    pub rmse: f64,
    pub r2: f64,
    pub r: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    /// Fits (inner and refit) that stopped at their iteration limit.
    pub nonconverged_fits: usize,
    pub model: TrainedModel,
}

/// Fold structure for one repetition; a function of `(seed, repetition)` only.
pub fn folds_for_repetition(
    dataset: &Dataset,
    options: &CvOptions,
    repetition: usize,
) -> Result<FoldAssignment> {
    let mut f = make_folds(
        &dataset.labels.values,
        &dataset.groups,
        options.k_outer,
        options.k_inner,
        derive_seed(options.seed, &[0, repetition as u64]),
    )?;
    f.repetition = repetition;
    Ok(f)
}

fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

fn pick(y: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| y[i]).collect()
}

fn seeded(params: &HyperParams, seed: u64) -> HyperParams {
    match params {
        HyperParams::Mlp(p) => {
            let mut p = p.clone();
            p.seed = seed;
            HyperParams::Mlp(p)
        }
        other => other.clone(),
    }
}

struct Unit<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    folds: &'a FoldAssignment,
    outer: usize,
    seed: u64,
}

impl Unit<'_> {
    fn unit_seed(&self, inner: usize, candidate: usize) -> u64 {
        derive_seed(
            self.seed,
            &[
                1,
                self.folds.repetition as u64,
                self.outer as u64,
                inner as u64,
                candidate as u64,
            ],
        )
    }

    /// Mean inner-validation RMSE and non-converged fit count of one grid point.
    fn score(&self, candidate: usize, params: &HyperParams) -> Result<(f64, usize)> {
        let mut total = 0.0;
        let mut nonconverged = 0;
        for v in 0..self.folds.k_inner {
            let train = self.folds.inner_training_indices(self.outer, v);
            let val = self.folds.inner_validation_indices(self.outer, v);
            let out = fit(
                &rows(self.x, &train),
                &pick(self.y, &train),
                &seeded(params, self.unit_seed(v, candidate)),
            )?;
            nonconverged += usize::from(!out.converged);
            let pred = out.model.predict(&rows(self.x, &val))?;
            let yv = pick(self.y, &val);
            let mse = pred
                .iter()
                .zip(&yv)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / yv.len() as f64;
            total += mse.sqrt();
        }
        Ok((total / self.folds.k_inner as f64, nonconverged))
    }
}

fn run_unit(
    unit: &Unit,
    candidates: &[HyperParams],
    names: &[String],
    modality: ModalitySelection,
) -> Result<EvaluationRecord> {
    let scores: Vec<(f64, usize)> = candidates
        .par_iter()
        .enumerate()
        .map(|(c, p)| unit.score(c, p))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (c, s) in scores.iter().enumerate() {
        if s.0 < scores[best].0 {
            best = c;
        }
    }
    let train = unit.folds.train_indices(unit.outer);
    let test = unit.folds.test_indices(unit.outer);
    let params = seeded(&candidates[best], unit.unit_seed(unit.folds.k_inner, best));
    let out = fit(&rows(unit.x, &train), &pick(unit.y, &train), &params)?;
    let y_test = pick(unit.y, &test);
    let m = metrics(&y_test, &out.model.predict(&rows(unit.x, &test))?)?;
    Ok(EvaluationRecord {
        repetition: unit.folds.repetition,
        outer_fold: unit.outer,
        algorithm: params.algorithm(),
        modality,
        hyperparameters: params,
        inner_rmse: scores[best].0,
        rmse: m.rmse,
        r2: m.r2,
        r: m.r,
        n_train: train.len(),
        n_test: test.len(),
        nonconverged_fits: scores.iter().map(|s| s.1).sum::<usize>() + usize::from(!out.converged),
        model: out.model.with_feature_names(names.to_vec())?,
    })
}

/// One record per (repetition, outer fold), ordered by repetition then fold.
pub fn nested_cv(
    dataset: &Dataset,
    algorithm: Algorithm,
    modality: ModalitySelection,
    grid: &HyperParamGrid,
    options: &CvOptions,
) -> Result<Vec<EvaluationRecord>> {
    grid.validate()?;
    if options.n_reps == 0 {
        return Err(Error::Config("n_reps must be positive".into()));
    }
    let features = dataset.features.select(modality);
    if features.n_features() == 0 {
        return Err(Error::Invalid(format!(
            "no {modality} features in the dataset"
        )));
    }
    let x = features.values().clone();
    let y = dataset.labels.values.clone();
    let names: Vec<String> = features.columns().iter().map(|c| c.tagged_name()).collect();
    let candidates = grid.candidates(algorithm);
    let folds: Vec<FoldAssignment> = (0..options.n_reps)
        .map(|rep| folds_for_repetition(dataset, options, rep))
        .collect::<Result<_>>()?;
    let units: Vec<(usize, usize)> = (0..options.n_reps)
        .flat_map(|r| (0..options.k_outer).map(move |o| (r, o)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        units
            .par_iter()
            .map(|&(rep, outer)| {
                let unit = Unit {
                    x: &x,
                    y: &y,
                    folds: &folds[rep],
                    outer,
                    seed: options.seed,
                };
                run_unit(&unit, &candidates, &names, modality)
            })
            .collect()
    })
}
