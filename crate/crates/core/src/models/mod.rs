//! Regressors with a shared train/predict contract.
//!
//! Every fit standardizes the feature columns with training statistics and
//! stores them in the returned [`TrainedModel`], so prediction on new data
//! applies the same transform. Columns with zero training variance are
//! mapped to 0 and carry no weight.

mod elastic_net;
pub mod mlp;
mod svr;

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use elastic_net::{fit_elastic_net, ElasticNetParams};
pub use mlp::{fit_mlp, Layer, MlpParams, Network};
pub use svr::{fit_svr, rbf_kernel, SvrParams};

/// Per-column mean and population SD of the training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Standardizer {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let v = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = v.sqrt();
            mean.push(m);
            sd.push(if s <= 1e-12 * m.abs().max(1.0) {
                0.0
            } else {
                s
            });
        }
        Standardizer { mean, sd }
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.sd[j] == 0.0
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            if self.sd[j] == 0.0 {
                0.0
            } else {
                (x[(i, j)] - self.mean[j]) / self.sd[j]
            }
        }))
    }
}

/// Kind-specific fitted parameters, all in standardized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Linear {
        intercept: f64,
        coefficients: Vec<f64>,
    },
    Svr {
        gamma: f64,
        c: f64,
        support_vectors: Vec<Vec<f64>>,
        /// `alpha_i - alpha_i*`, each within `[-C, C]`.
        dual_coefficients: Vec<f64>,
        /// Training-row index of each support vector.
        support_indices: Vec<usize>,
        bias: f64,
    },
    Mlp {
        network: Network,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    #[serde(flatten)]
    pub params: ModelParams,
}

impl TrainedModel {
    fn new(standardizer: Standardizer, params: ModelParams) -> TrainedModel {
        TrainedModel {
            feature_names: (0..standardizer.n_features())
                .map(|j| format!("x{j}"))
                .collect(),
            standardizer,
            params,
        }
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<TrainedModel> {
        if names.len() != self.standardizer.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.standardizer.n_features(),
                got: names.len(),
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.params {
            ModelParams::Linear { .. } => Algorithm::ElasticNet,
            ModelParams::Svr { .. } => Algorithm::Svr,
            ModelParams::Mlp { .. } => Algorithm::Mlp,
        }
    }

    /// Linear coefficients on standardized features.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.params {
            ModelParams::Linear { coefficients, .. } => Some(coefficients),
            _ => None,
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let z = self.standardizer.transform(x)?;
        Ok(match &self.params {
            ModelParams::Linear {
                intercept,
                coefficients,
            } => z
                .row_iter()
                .map(|row| {
                    intercept
                        + row
                            .iter()
                            .zip(coefficients)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                })
                .collect(),
            ModelParams::Svr {
                gamma,
                support_vectors,
                dual_coefficients,
                bias,
                ..
            } => z
                .row_iter()
                .map(|row| {
                    let row: Vec<f64> = row.iter().copied().collect();
                    bias + support_vectors
                        .iter()
                        .zip(dual_coefficients)
                        .map(|(sv, b)| b * rbf_kernel(sv, &row, *gamma))
                        .sum::<f64>()
                })
                .collect(),
            ModelParams::Mlp { network } => network.forward(&z),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn predict(model: &TrainedModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    model.predict(x)
}

/// A trained model plus solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model: TrainedModel,
    pub converged: bool,
    /// Sweeps (Elastic Net), pair updates (SVR) or epochs (MLP).
    pub iterations: usize,
    /// Objective after each sweep (Elastic Net), final dual objective (SVR),
    /// or training loss per epoch (MLP).
    pub objective_trace: Vec<f64>,
}

impl FitOutcome {
    pub(crate) fn warn_if_not_converged(self, what: &str) -> FitOutcome {
        if !self.converged {
            warn!(
                "{what} did not converge after {} iterations",
                self.iterations
            );
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ElasticNet,
    Svr,
    Mlp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::ElasticNet, Algorithm::Svr, Algorithm::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::ElasticNet => "elastic_net",
            Algorithm::Svr => "svr",
            Algorithm::Mlp => "mlp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "elastic_net" | "enet" => Ok(Algorithm::ElasticNet),
            "svr" => Ok(Algorithm::Svr),
            "mlp" => Ok(Algorithm::Mlp),
            other => Err(Error::Invalid(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Hyperparameters for one fit of any algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum HyperParams {
    ElasticNet(ElasticNetParams),
    Svr(SvrParams),
    Mlp(MlpParams),
}

impl HyperParams {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            HyperParams::ElasticNet(_) => Algorithm::ElasticNet,
            HyperParams::Svr(_) => Algorithm::Svr,
            HyperParams::Mlp(_) => Algorithm::Mlp,
        }
    }

    /// Compact `key=value` form used in record files.
    pub fn label(&self) -> String {
        match self {
            HyperParams::ElasticNet(p) => format!("alpha={};lambda={}", p.alpha, p.lambda),
            HyperParams::Svr(p) => format!("C={};gamma={}", p.c, p.gamma),
            HyperParams::Mlp(p) => format!(
                "layers={};units={};l2_alpha={}",
                p.hidden.len(),
                p.hidden.first().copied().unwrap_or(0),
                p.l2_alpha
            ),
        }
    }
}

pub fn fit(x: &DMatrix<f64>, y: &[f64], params: &HyperParams) -> Result<FitOutcome> {
    match params {
        HyperParams::ElasticNet(p) => fit_elastic_net(x, y, p),
        HyperParams::Svr(p) => fit_svr(x, y, p),
        HyperParams::Mlp(p) => fit_mlp(x, y, p),
    }
}

pub(crate) fn check_training_data(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch(x.nrows(), y.len()));
    }
    if x.nrows() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: x.nrows(),
        });
    }
    for (i, row) in x.row_iter().enumerate() {
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: i,
                column: format!("x{j}"),
            });
        }
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            row: i,
            column: "y".into(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizer_population_sd_and_constant_columns() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.1, 2.0, 0.1, 3.0, 0.1, 4.0, 0.1]);
        let s = Standardizer::fit(&x);
        assert_eq!(s.mean[0], 2.5);
        assert!((s.sd[0] - 1.25f64.sqrt()).abs() < 1e-15);
        assert!(s.is_constant(1));
        let z = s.transform(&x).unwrap();
        assert!(z.column(1).iter().all(|&v| v == 0.0));
        assert!((z.column(0).sum()).abs() < 1e-12);
        assert!(matches!(
            s.transform(&DMatrix::zeros(1, 3)),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn zero_coefficients_predict_intercept() {
        let model = TrainedModel::new(
            Standardizer {
                mean: vec![0.0; 3],
                sd: vec![1.0; 3],
            },
            ModelParams::Linear {
                intercept: 0.7,
                coefficients: vec![0.0; 3],
            },
        );
        let x = DMatrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(predict(&model, &x).unwrap(), vec![0.7; 5]);
    }

    #[test]
    fn model_json_round_trip() {
        let model = TrainedModel::new(
            Standardizer {
                mean: vec![1.0, 2.0],
                sd: vec![0.5, 0.0],
            },
            ModelParams::Linear {
                intercept: -0.25,
                coefficients: vec![0.4, 0.0],
            },
        )
        .with_feature_names(vec!["a".into(), "b".into()])
        .unwrap();
        let json = model.to_json();
        assert!(json.contains("\"kind\":\"linear\""));
        assert_eq!(TrainedModel::from_json(&json).unwrap(), model);
    }

    #[test]
    fn algorithm_names() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert!("knn".parse::<Algorithm>().is_err());
    }
}
