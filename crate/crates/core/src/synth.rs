//! Seeded synthetic datasets with a known latent trait.
//!
//! Each participant gets planted signal draws `u_k ~ N(0, 1)`, one per
//! feature, and a latent score
//! `eta = sum_k b_k u_k + sqrt(1 - sum_k b_k^2) z`, so `eta` is standard
//! normal and `b` are its true standardized regression weights. Observed
//! features are `u_k` plus Gaussian noise. Question means follow the
//! one-factor measurement model `mu_q = l_q eta + sqrt(e_q) d_q`, and each
//! rater reports `mu_q` plus rater noise, shifted to the scale midpoint,
//! rounded and clamped to the 0-4 scale.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{
    write_dataset, Dataset, FeatureColumn, FeatureTable, GroupAssignment, LabelVector, Modality,
    TraitTable, TRAIT_NAMES,
};
use crate::error::{Error, Result};
use crate::latent::Indicators;
use crate::reliability::{write_ratings_csv, RatingRecord};

pub const SCALE_MIN: f64 = 0.0;
pub const SCALE_MAX: f64 = 4.0;
const SCALE_MID: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub modality: Modality,
    /// True standardized weight of this feature in the latent score.
    pub coefficient: f64,
    #[serde(default)]
    pub noise_sd: f64,
}

impl FeatureSpec {
    pub fn new(name: &str, modality: Modality, coefficient: f64, noise_sd: f64) -> FeatureSpec {
        FeatureSpec {
            name: name.to_string(),
            modality,
            coefficient,
            noise_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_groups: usize,
    pub group_size: usize,
    pub question_ids: Vec<String>,
    pub loadings: Vec<f64>,
    pub residual_variances: Vec<f64>,
    pub features: Vec<FeatureSpec>,
    /// Raters per panel; each panel has its own raters.
    pub n_raters: usize,
    /// Participants rated by one panel.
    pub panel_size: usize,
    pub rater_noise_sd: f64,
    /// Correlation of each trait in [`TRAIT_NAMES`] order with the latent score.
    pub trait_correlations: Vec<f64>,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        use Modality::{Linguistic, Visual};
        SynthConfig {
            n_groups: 32,
            group_size: 3,
            question_ids: ["q1", "q2", "q3", "q4"].map(String::from).to_vec(),
            loadings: vec![0.97, 0.95, 0.96, 0.87],
            residual_variances: vec![0.07, 0.11, 0.08, 0.24],
            features: vec![
                FeatureSpec::new("Word Count", Linguistic, 0.4, 0.25),
                FeatureSpec::new("Social", Linguistic, 0.0, 0.25),
                FeatureSpec::new("Leisure", Linguistic, 0.0, 0.25),
                FeatureSpec::new("Clout", Linguistic, 0.0, 0.25),
                FeatureSpec::new("AU Intensity Mean", Visual, 0.2, 0.25),
                FeatureSpec::new("AU Count Mean", Visual, 0.2, 0.25),
                FeatureSpec::new("Head Pitch Displacement", Visual, 0.0, 0.25),
                FeatureSpec::new("Head Yaw Velocity", Visual, 0.0, 0.25),
            ],
            n_raters: 8,
            panel_size: 16,
            rater_noise_sd: 0.5,
            trait_correlations: vec![-0.07, 0.26, 0.0, 0.28, 0.0],
        }
    }
}

impl SynthConfig {
    pub fn n_participants(&self) -> usize {
        self.n_groups * self.group_size
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_groups == 0 || self.group_size == 0 || self.n_raters == 0 || self.panel_size == 0
        {
            return fail("n_groups, group_size, n_raters and panel_size must be positive".into());
        }
        let q = self.question_ids.len();
        if q == 0 || self.loadings.len() != q || self.residual_variances.len() != q {
            return fail(format!(
                "need one loading and one residual variance per question ({q} questions)"
            ));
        }
        if self.loadings.iter().any(|v| !v.is_finite()) {
            return fail("loadings must be finite".into());
        }
        if self
            .residual_variances
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return fail("residual variances must be >= 0".into());
        }
        if !(self.rater_noise_sd.is_finite() && self.rater_noise_sd >= 0.0) {
            return fail("rater_noise_sd must be >= 0".into());
        }
        if self.features.is_empty() {
            return fail("at least one feature is required".into());
        }
        for f in &self.features {
            if !(f.noise_sd.is_finite() && f.noise_sd >= 0.0) {
                return fail(format!("feature `{}`: noise_sd must be >= 0", f.name));
            }
            if !f.coefficient.is_finite() {
                return fail(format!("feature `{}`: coefficient must be finite", f.name));
            }
        }
        let ss: f64 = self
            .features
            .iter()
            .map(|f| f.coefficient * f.coefficient)
            .sum();
        if ss > 1.0 + 1e-9 {
            return fail(format!("sum of squared coefficients is {ss}, must be <= 1"));
        }
        if self.trait_correlations.len() != TRAIT_NAMES.len()
            || self
                .trait_correlations
                .iter()
                .any(|r| !(-1.0..=1.0).contains(r))
        {
            return fail(format!(
                "trait_correlations needs {} values in [-1, 1]",
                TRAIT_NAMES.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    /// Labels are the true latent scores.
    pub dataset: Dataset,
    pub ratings: Vec<RatingRecord>,
    /// Continuous question means before rater noise and rounding.
    pub question_means: Indicators,
}

impl Synthetic {
    pub fn eta(&self) -> &[f64] {
        &self.dataset.labels.values
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Synthetic> {
    config.validate()?;
    let n = config.n_participants();
    let p = config.features.len();
    let q = config.question_ids.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let ids: Vec<String> = (1..=n).map(|i| format!("p{i:03}")).collect();
    let groups: Vec<String> = (0..n)
        .map(|i| format!("g{:02}", i / config.group_size + 1))
        .collect();

    let ss: f64 = config
        .features
        .iter()
        .map(|f| f.coefficient * f.coefficient)
        .sum();
    let residual_sd = (1.0 - ss).max(0.0).sqrt();
    let mut eta = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let u: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
        let z = normal(&mut rng);
        let e: f64 = config
            .features
            .iter()
            .zip(&u)
            .map(|(f, u)| f.coefficient * u)
            .sum::<f64>()
            + residual_sd * z;
        eta.push(e);
        rows.push(
            config
                .features
                .iter()
                .zip(&u)
                .map(|(f, u)| u + f.noise_sd * normal(&mut rng))
                .collect::<Vec<f64>>(),
        );
    }

    let mut means = DMatrix::zeros(n, q);
    for i in 0..n {
        for j in 0..q {
            means[(i, j)] = config.loadings[j] * eta[i]
                + config.residual_variances[j].sqrt() * normal(&mut rng);
        }
    }

    let mut traits = DMatrix::zeros(n, TRAIT_NAMES.len());
    for i in 0..n {
        for (t, &r) in config.trait_correlations.iter().enumerate() {
            traits[(i, t)] = r * eta[i] + (1.0 - r * r).sqrt() * normal(&mut rng);
        }
    }

    let mut ratings = Vec::with_capacity(n * q * config.n_raters);
    for (j, question) in config.question_ids.iter().enumerate() {
        for i in 0..n {
            let panel = i / config.panel_size + 1;
            for r in 1..=config.n_raters {
                let raw = SCALE_MID + means[(i, j)] + config.rater_noise_sd * normal(&mut rng);
                ratings.push(RatingRecord {
                    video_id: ids[i].clone(),
                    rater_id: format!("panel{panel:02}_r{r:02}"),
                    question_id: question.clone(),
                    score: raw.round().clamp(SCALE_MIN, SCALE_MAX),
                });
            }
        }
    }

    let columns = config
        .features
        .iter()
        .map(|f| FeatureColumn::new(f.name.clone(), f.modality))
        .collect();
    let dataset = Dataset::new(
        FeatureTable::from_rows(ids.clone(), columns, &rows)?,
        LabelVector::new(ids.clone(), eta)?,
        GroupAssignment::new(ids.clone(), groups, config.group_size)?,
        Some(TraitTable::new(
            ids.clone(),
            TRAIT_NAMES.map(String::from).to_vec(),
            traits,
        )?),
    )?;
    Ok(Synthetic {
        dataset,
        ratings,
        question_means: Indicators::new(ids, config.question_ids.clone(), means)?,
    })
}

/// Writes `ratings.csv`, `question_means.csv` and the dataset files into
/// `dir`. Returns the manifest path.
pub fn write_synthetic(synthetic: &Synthetic, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let manifest = write_dataset(&synthetic.dataset, dir)?;
    write_ratings_csv(&synthetic.ratings, dir.join("ratings.csv"))?;
    synthetic
        .question_means
        .write_csv(dir.join("question_means.csv"))?;
    Ok(manifest)
}
