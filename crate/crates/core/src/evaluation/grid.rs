//! Hyperparameter grids and the tie-break preference order of candidates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Algorithm, ElasticNetParams, HyperParams, MlpParams, SvrParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetGrid {
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Default for ElasticNetGrid {
    fn default() -> Self {
        ElasticNetGrid {
            alpha: vec![0.01, 0.05, 0.1, 0.5, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5],
            lambda: vec![0.0, 0.1, 0.5, 0.7, 0.9, 0.95, 0.99, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    0.1
}

impl Default for SvrGrid {
    fn default() -> Self {
        SvrGrid {
            c: (-5..=15).map(|e| 2f64.powi(e)).collect(),
            gamma: (-15..=3).map(|e| 2f64.powi(e)).collect(),
            epsilon: default_epsilon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpGrid {
    pub layers: Vec<usize>,
    pub units: Vec<usize>,
    pub l2_alpha: Vec<f64>,
    /// Training settings shared by every candidate.
    #[serde(default = "default_mlp_template")]
    pub template: MlpParams,
}

fn default_mlp_template() -> MlpParams {
    MlpParams::new(vec![64], 1e-4)
}

impl Default for MlpGrid {
    fn default() -> Self {
        MlpGrid {
            layers: vec![1, 2],
            units: vec![64, 128],
            l2_alpha: vec![
                0.0001, 0.001, 0.01, 0.05, 0.1, 0.5, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.7, 1.9, 2.0,
                3.0, 4.0, 5.0,
            ],
            template: default_mlp_template(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParamGrid {
    pub elastic_net: ElasticNetGrid,
    pub svr: SvrGrid,
    pub mlp: MlpGrid,
}

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn sorted_asc(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

impl HyperParamGrid {
    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(Error::Config(format!("grid `{name}` is empty")))
            } else {
                Ok(())
            }
        };
        nonempty("elastic_net.alpha", self.elastic_net.alpha.len())?;
        nonempty("elastic_net.lambda", self.elastic_net.lambda.len())?;
        nonempty("svr.c", self.svr.c.len())?;
        nonempty("svr.gamma", self.svr.gamma.len())?;
        nonempty("mlp.layers", self.mlp.layers.len())?;
        nonempty("mlp.units", self.mlp.units.len())?;
        nonempty("mlp.l2_alpha", self.mlp.l2_alpha.len())?;
        if self.elastic_net.alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config(
                "elastic_net.alpha values must be >= 0".into(),
            ));
        }
        if self
            .elastic_net
            .lambda
            .iter()
            .any(|l| !(0.0..=1.0).contains(l))
        {
            return Err(Error::Config(
                "elastic_net.lambda values must be in [0, 1]".into(),
            ));
        }
        if self
            .svr
            .c
            .iter()
            .chain(&self.svr.gamma)
            .any(|v| !(*v > 0.0))
        {
            return Err(Error::Config(
                "svr.c and svr.gamma values must be > 0".into(),
            ));
        }
        if self
            .mlp
            .layers
            .iter()
            .chain(&self.mlp.units)
            .any(|&v| v == 0)
        {
            return Err(Error::Config(
                "mlp.layers and mlp.units must be positive".into(),
            ));
        }
        if self.mlp.l2_alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config("mlp.l2_alpha values must be >= 0".into()));
        }
        Ok(())
    }

    pub fn size(&self, algorithm: Algorithm) -> usize {
        match algorithm {
            Algorithm::ElasticNet => self.elastic_net.alpha.len() * self.elastic_net.lambda.len(),
            Algorithm::Svr => self.svr.c.len() * self.svr.gamma.len(),
            Algorithm::Mlp => {
                self.mlp.layers.len() * self.mlp.units.len() * self.mlp.l2_alpha.len()
            }
        }
    }

    /// All grid points, most regularized first. Selection keeps the first of
    /// equally scoring candidates, so this order is the tie-break.
    pub fn candidates(&self, algorithm: Algorithm) -> Vec<HyperParams> {
        match algorithm {
            Algorithm::ElasticNet => {
                let lambdas = sorted_desc(&self.elastic_net.lambda);
                sorted_desc(&self.elastic_net.alpha)
                    .into_iter()
                    .flat_map(|a| {
                        lambdas
                            .iter()
                            .map(move |&l| HyperParams::ElasticNet(ElasticNetParams::new(a, l)))
                    })
                    .collect()
            }
            Algorithm::Svr => {
                let gammas = sorted_asc(&self.svr.gamma);
                let eps = self.svr.epsilon;
                sorted_asc(&self.svr.c)
                    .into_iter()
                    .flat_map(|c| {
                        gammas.iter().map(move |&g| {
                            let mut p = SvrParams::new(c, g);
                            p.epsilon = eps;
                            HyperParams::Svr(p)
                        })
                    })
                    .collect()
            }
            Algorithm::Mlp => {
                let mut layers = self.mlp.layers.clone();
                layers.sort_unstable();
                let mut units = self.mlp.units.clone();
                units.sort_unstable();
                let mut out = Vec::new();
                for l2 in sorted_desc(&self.mlp.l2_alpha) {
                    for &depth in &layers {
                        for &width in &units {
                            let mut p = self.mlp.template.clone();
                            p.hidden = vec![width; depth];
                            p.l2_alpha = l2;
                            out.push(HyperParams::Mlp(p));
                        }
                    }
                }
                out
            }
        }
    }
}
