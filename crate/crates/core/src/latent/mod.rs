//! One-factor Bayesian confirmatory factor analysis.
//!
//! Indicators are standardized, then the posterior of the linear-Gaussian
//! factor model is sampled with a conjugate Gibbs sampler. The latent
//! variance is fixed at 1 and reflection is resolved by keeping the first
//! loading positive. Posterior means of the latent scores, re-standardized,
//! serve as labels downstream.

mod fit;
mod gibbs;

use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{zscore, LabelVector, TraitTable};
use crate::error::{Error, Result};
use crate::stats::{self, derive_seed};

pub use fit::{fit_indices, sample_covariance, FitIndices};

/// Split-R-hat above this value marks the posterior as not converged.
pub const RHAT_THRESHOLD: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

/// The residual quantity a [`ResidualPrior`] is placed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualScale {
    /// Precision `1 / epsilon_j`; conjugate.
    Precision,
    /// Residual standard deviation `sqrt(epsilon_j)`.
    Sd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPrior {
    pub gamma: GammaPrior,
    pub scale: ResidualScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub loading: NormalPrior,
    pub intercept: NormalPrior,
    pub residual: ResidualPrior,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            loading: NormalPrior { mean: 0.0, sd: 1.0 },
            intercept: NormalPrior { mean: 0.0, sd: 1.0 },
            residual: ResidualPrior {
                gamma: GammaPrior {
                    shape: 1.0,
                    rate: 1.0,
                },
                scale: ResidualScale::Sd,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfaConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_kept: usize,
    pub priors: Priors,
    pub seed: u64,
}

impl Default for CfaConfig {
    fn default() -> Self {
        CfaConfig {
            n_chains: 4,
            n_warmup: 1000,
            n_kept: 1000,
            priors: Priors::default(),
            seed: 0,
        }
    }
}

impl CfaConfig {
    pub fn with_seed(seed: u64) -> Self {
        CfaConfig {
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.n_warmup == 0 || self.n_kept == 0 {
            return Err(Error::Config(
                "chain, warmup and kept counts must be at least 1".into(),
            ));
        }
        let p = &self.priors;
        if !(p.loading.sd > 0.0
            && p.intercept.sd > 0.0
            && p.residual.gamma.shape > 0.0
            && p.residual.gamma.rate > 0.0)
        {
            return Err(Error::Config(
                "prior scale, shape and rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Participants × indicator matrix (averaged question scores).
#[derive(Debug, Clone, PartialEq)]
pub struct Indicators {
    pub participant_ids: Vec<String>,
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl Indicators {
    pub fn new(
        participant_ids: Vec<String>,
        names: Vec<String>,
        values: DMatrix<f64>,
    ) -> Result<Self> {
        if values.nrows() != participant_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: participant_ids.len(),
                got: values.nrows(),
            });
        }
        if values.ncols() != names.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: values.ncols(),
            });
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: idx % values.nrows(),
                column: names[idx / values.nrows()].clone(),
            });
        }
        Ok(Indicators {
            participant_ids,
            names,
            values,
        })
    }

    /// Reads `participant_id,<indicator>,...`.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::parse(path, 1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.first().map(String::as_str) != Some("participant_id") {
            return Err(Error::parse(
                path,
                1,
                "first column must be `participant_id`",
            ));
        }
        let names = headers[1..].to_vec();
        let mut ids = Vec::new();
        let mut flat = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::parse(path, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            ids.push(rec[0].to_string());
            for (cell, name) in rec.iter().skip(1).zip(&names) {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::parse(path, line, format!("`{cell}` is not a number")))?;
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue {
                        row: line,
                        column: name.clone(),
                    });
                }
                flat.push(v);
            }
        }
        let values = DMatrix::from_row_slice(ids.len(), names.len(), &flat);
        Indicators::new(ids, names, values)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w =
            csv::Writer::from_path(path).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let mut header = vec!["participant_id".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        for (i, id) in self.participant_ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend((0..self.names.len()).map(|j| self.values[(i, j)].to_string()));
            w.write_record(&row)
                .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Column-wise z-scores.
    pub fn standardized(&self) -> Result<DMatrix<f64>> {
        let mut out = self.values.clone();
        for j in 0..self.values.ncols() {
            let col: Vec<f64> = self.values.column(j).iter().copied().collect();
            let z = zscore(&col).map_err(|e| match e {
                Error::ZeroVariance(_) => Error::DegenerateInput(format!(
                    "indicator `{}` has zero variance",
                    self.names[j]
                )),
                other => other,
            })?;
            out.column_mut(j).copy_from_slice(&z);
        }
        Ok(out)
    }
}

/// Kept draws of one chain, indexed `[draw][parameter]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub loadings: Vec<Vec<f64>>,
    pub residual_variances: Vec<Vec<f64>>,
    pub intercepts: Vec<Vec<f64>>,
    pub latent: Vec<Vec<f64>>,
}

impl ChainDraws {
    pub fn len(&self) -> usize {
        self.loadings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loadings.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Split-R-hat; NaN when chains are too short to split.
    pub rhat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfaPosterior {
    pub participant_ids: Vec<String>,
    pub indicator_names: Vec<String>,
    pub chains: Vec<ChainDraws>,
    pub summaries: Vec<ParameterSummary>,
    pub max_rhat: f64,
    /// False when any split-R-hat exceeds [`RHAT_THRESHOLD`].
    pub converged: bool,
}

/// Which block of the parameter vector a summary belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParameterKind {
    Loading,
    ResidualVariance,
    Intercept,
    Latent,
}

impl CfaPosterior {
    /// Assembles a posterior from chain draws and computes summaries and split-R-hat.
    pub fn from_chains(
        participant_ids: Vec<String>,
        indicator_names: Vec<String>,
        chains: Vec<ChainDraws>,
    ) -> Result<Self> {
        if chains.is_empty() || chains.iter().any(ChainDraws::is_empty) {
            return Err(Error::EmptyInput("posterior draws".into()));
        }
        let p = indicator_names.len();
        let n = participant_ids.len();
        let mut summaries = Vec::with_capacity(3 * p + n);
        let blocks: [(ParameterKind, &str, usize); 4] = [
            (ParameterKind::Loading, "lambda", p),
            (ParameterKind::ResidualVariance, "epsilon", p),
            (ParameterKind::Intercept, "nu", p),
            (ParameterKind::Latent, "eta", n),
        ];
        for (kind, prefix, count) in blocks {
            for idx in 0..count {
                let per_chain: Vec<Vec<f64>> = chains
                    .iter()
                    .map(|c| block(c, kind).iter().map(|d| d[idx]).collect())
                    .collect();
                summaries.push(summarize(format!("{prefix}_{}", idx + 1), &per_chain));
            }
        }
        let max_rhat = summaries
            .iter()
            .map(|s| s.rhat)
            .filter(|r| !r.is_nan())
            .fold(f64::NEG_INFINITY, f64::max);
        let all_defined = summaries.iter().all(|s| !s.rhat.is_nan());
        let converged = all_defined && max_rhat <= RHAT_THRESHOLD;
        Ok(CfaPosterior {
            participant_ids,
            indicator_names,
            chains,
            summaries,
            max_rhat,
            converged,
        })
    }

    pub fn n_indicators(&self) -> usize {
        self.indicator_names.len()
    }

    pub fn n_participants(&self) -> usize {
        self.participant_ids.len()
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(ChainDraws::len).sum()
    }

    pub fn summaries_of(&self, kind: ParameterKind) -> &[ParameterSummary] {
        let p = self.n_indicators();
        match kind {
            ParameterKind::Loading => &self.summaries[0..p],
            ParameterKind::ResidualVariance => &self.summaries[p..2 * p],
            ParameterKind::Intercept => &self.summaries[2 * p..3 * p],
            ParameterKind::Latent => &self.summaries[3 * p..],
        }
    }

    pub fn posterior_means(&self, kind: ParameterKind) -> Vec<f64> {
        self.summaries_of(kind).iter().map(|s| s.mean).collect()
    }

    /// All draws of one block, chains concatenated.
    pub fn draws(&self, kind: ParameterKind) -> impl Iterator<Item = &Vec<f64>> {
        self.chains.iter().flat_map(move |c| block(c, kind).iter())
    }
}

fn block(c: &ChainDraws, kind: ParameterKind) -> &[Vec<f64>] {
    match kind {
        ParameterKind::Loading => &c.loadings,
        ParameterKind::ResidualVariance => &c.residual_variances,
        ParameterKind::Intercept => &c.intercepts,
        ParameterKind::Latent => &c.latent,
    }
}

fn summarize(name: String, per_chain: &[Vec<f64>]) -> ParameterSummary {
    let all: Vec<f64> = per_chain.iter().flatten().copied().collect();
    let mean = stats::mean(&all);
    let sd = if all.len() > 1 {
        (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (all.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = all;
    sorted.sort_by(f64::total_cmp);
    ParameterSummary {
        name,
        mean,
        sd,
        ci_low: stats::percentile_sorted(&sorted, 2.5),
        ci_high: stats::percentile_sorted(&sorted, 97.5),
        rhat: split_rhat(per_chain),
    }
}

/// Split-R-hat: each chain is cut in half and the halves are compared as
/// separate chains. NaN when chains hold fewer than 4 draws.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let len = chains.iter().map(Vec::len).min().unwrap_or(0);
    if len < 4 {
        return f64::NAN;
    }
    let half = len / 2;
    let pieces: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[len - half..len]])
        .collect();
    let m = pieces.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = pieces.iter().map(|c| stats::mean(c)).collect();
    let grand = stats::mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = pieces
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Samples the one-factor posterior. Indicators are standardized per column
/// first (idempotent for already standardized input).
pub fn fit_cfa(indicators: &Indicators, config: &CfaConfig) -> Result<CfaPosterior> {
    config.validate()?;
    let n = indicators.participant_ids.len();
    let p = indicators.names.len();
    if n < 10 {
        return Err(Error::TooShort { needed: 10, got: n });
    }
    if p < 3 {
        return Err(Error::DegenerateInput(format!(
            "a one-factor model needs at least 3 indicators, got {p}"
        )));
    }
    if config.priors.residual.scale == ResidualScale::Sd
        && config.priors.residual.gamma.shape >= n as f64
    {
        return Err(Error::Config(format!(
            "residual SD prior shape must be below the participant count {n}"
        )));
    }
    let x = indicators.standardized()?;

    let chains: Vec<ChainDraws> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(&x, config, c))
        .collect();

    let posterior = CfaPosterior::from_chains(
        indicators.participant_ids.clone(),
        indicators.names.clone(),
        chains,
    )?;
    if !posterior.converged {
        warn!(
            "NotConverged: max split-R-hat {:.4} exceeds {RHAT_THRESHOLD}",
            posterior.max_rhat
        );
    }
    Ok(posterior)
}

fn run_chain(x: &DMatrix<f64>, config: &CfaConfig, chain: usize) -> ChainDraws {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[chain as u64]));
    let (n, p) = (x.nrows(), x.ncols());
    let mut state = gibbs::State::initial(p, n, &mut rng);
    for _ in 0..config.n_warmup {
        gibbs::sweep(x, &mut state, &config.priors, &mut rng);
    }
    let mut draws = ChainDraws {
        loadings: Vec::with_capacity(config.n_kept),
        residual_variances: Vec::with_capacity(config.n_kept),
        intercepts: Vec::with_capacity(config.n_kept),
        latent: Vec::with_capacity(config.n_kept),
    };
    for _ in 0..config.n_kept {
        gibbs::sweep(x, &mut state, &config.priors, &mut rng);
        draws.loadings.push(state.loadings.clone());
        draws
            .residual_variances
            .push(state.precisions.iter().map(|t| 1.0 / t).collect());
        draws.intercepts.push(state.intercepts.clone());
        draws.latent.push(state.latent.clone());
    }
    draws
}

/// Posterior-mean latent scores, re-standardized.
pub fn factor_scores(posterior: &CfaPosterior) -> Result<LabelVector> {
    let means = posterior.posterior_means(ParameterKind::Latent);
    LabelVector::new(posterior.participant_ids.clone(), zscore(&means)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitCorrelation {
    pub name: String,
    pub r: f64,
}

/// Pearson correlation of the scores with every trait column.
pub fn external_validity(
    scores: &LabelVector,
    traits: &TraitTable,
) -> Result<Vec<TraitCorrelation>> {
    let traits = traits.reorder(&scores.participant_ids)?;
    (0..traits.names.len())
        .map(|j| {
            let col = traits.column(j);
            let r = stats::pearson(&scores.values, &col)
                .ok_or_else(|| Error::ZeroVariance(format!("trait `{}`", traits.names[j])))?;
            Ok(TraitCorrelation {
                name: traits.names[j].clone(),
                r,
            })
        })
        .collect()
}
