use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub r2: f64,
    /// `None` when the predictions are constant.
    pub r: Option<f64>,
}

/// RMSE, `1 - SSE/SST` and Pearson `r` of predictions against targets.
pub fn metrics(y: &[f64], y_hat: &[f64]) -> Result<Metrics> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: y.len(),
        });
    }
    let n = y.len() as f64;
    let mean = stats::mean(y);
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    let sst: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if sst == 0.0 {
        return Err(Error::ZeroVariance("targets".into()));
    }
    Ok(Metrics {
        rmse: (sse / n).sqrt(),
        r2: 1.0 - sse / sst,
        r: stats::pearson(y, y_hat),
    })
}
