//! Elastic Net by cyclic coordinate descent on the covariance (Gram) form.
//!
//! Minimizes
//! `(1/2n) ||y - b0 - Z beta||^2 + alpha (lambda ||beta||_1 + (1 - lambda)/2 ||beta||^2)`
//! where `Z` holds the standardized training features.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_training_data, FitOutcome, ModelParams, Standardizer, TrainedModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetParams {
    pub alpha: f64,
    pub lambda: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    10_000
}

impl ElasticNetParams {
    pub fn new(alpha: f64, lambda: f64) -> ElasticNetParams {
        ElasticNetParams {
            alpha,
            lambda,
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("tol and max_iter must be positive".into()));
        }
        Ok(())
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

struct Problem {
    gram: DMatrix<f64>,
    cov: DVector<f64>,
    yy: f64,
    l1: f64,
    l2: f64,
}

impl Problem {
    fn objective(&self, beta: &DVector<f64>, gb: &DVector<f64>) -> f64 {
        let fit = 0.5 * self.yy - self.cov.dot(beta) + 0.5 * beta.dot(gb);
        fit + self.l1 * beta.lp_norm(1) + 0.5 * self.l2 * beta.norm_squared()
    }
}

pub fn fit_elastic_net(
    x: &DMatrix<f64>,
    y: &[f64],
    params: &ElasticNetParams,
) -> Result<FitOutcome> {
    params.validate()?;
    check_training_data(x, y)?;
    let n = x.nrows() as f64;
    let p = x.ncols();
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x)?;
    let y_mean = y.iter().sum::<f64>() / n;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));

    let problem = Problem {
        gram: z.tr_mul(&z) / n,
        cov: z.tr_mul(&yc) / n,
        yy: yc.norm_squared() / n,
        l1: params.alpha * params.lambda,
        l2: params.alpha * (1.0 - params.lambda),
    };
    let active: Vec<usize> = (0..p).filter(|&j| !standardizer.is_constant(j)).collect();

    let mut beta = DVector::zeros(p);
    let mut gb = DVector::zeros(p);
    let mut trace = vec![problem.objective(&beta, &gb)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for &j in &active {
            let gjj = problem.gram[(j, j)];
            let rho = problem.cov[j] - gb[j] + gjj * beta[j];
            let new = soft_threshold(rho, problem.l1) / (gjj + problem.l2);
            let delta = new - beta[j];
            if delta != 0.0 {
                beta[j] = new;
                gb.axpy(delta, &problem.gram.column(j), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        let obj = problem.objective(&beta, &gb);
        let prev = *trace.last().expect("trace starts non-empty");
        debug_assert!(
            obj <= prev + 1e-10 * (1.0 + prev.abs()),
            "objective rose: {prev} -> {obj}"
        );
        trace.push(obj);
        if max_change < params.tol {
            converged = true;
            break;
        }
    }

    let model = TrainedModel::new(
        standardizer,
        ModelParams::Linear {
            intercept: y_mean,
            coefficients: beta.iter().copied().collect(),
        },
    );
    Ok(FitOutcome {
        model,
        converged,
        iterations,
        objective_trace: trace,
    }
    .warn_if_not_converged("elastic net"))
}
