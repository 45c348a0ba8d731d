//! Fully connected regression network: tanh hidden layers, linear output,
//! trained with Adam on mini-batches.
//!
//! Batch loss over `m` rows:
//! `(1/2m) sum (yhat - y)^2 + (l2_alpha / 2m) sum ||W||^2`
//! (weights only, biases unpenalized).

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_training_data, FitOutcome, ModelParams, Standardizer, TrainedModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub l2_alpha: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Share of training rows held out for early stopping; 0 monitors the
    /// training loss instead.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_learning_rate() -> f64 {
    1e-3
}

fn default_max_epochs() -> usize {
    500
}

fn default_batch_size() -> usize {
    32
}

fn default_patience() -> usize {
    10
}

fn default_validation_fraction() -> f64 {
    0.1
}

fn default_tol() -> f64 {
    1e-6
}

impl MlpParams {
    pub fn new(hidden: Vec<usize>, l2_alpha: f64) -> MlpParams {
        MlpParams {
            hidden,
            l2_alpha,
            learning_rate: default_learning_rate(),
            max_epochs: default_max_epochs(),
            batch_size: default_batch_size(),
            seed: 0,
            patience: default_patience(),
            validation_fraction: default_validation_fraction(),
            tol: default_tol(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(
                "hidden layer sizes must be non-empty and positive".into(),
            ));
        }
        if !(self.l2_alpha >= 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config(
                "l2_alpha must be >= 0 and learning_rate > 0".into(),
            ));
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(
                "max_epochs, batch_size and patience must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(
                "validation_fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Dense layer, `out = W in + b` with `W` stored row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn w(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_out, self.n_in, &self.weights)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    /// Weights uniform on `+-sqrt(3 / fan_in)` (unit-variance inputs give
    /// unit-variance pre-activations); biases zero.
    pub fn init(n_in: usize, hidden: &[usize], seed: u64) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let bound = (3.0 / n_in.max(1) as f64).sqrt();
                Layer {
                    n_in,
                    n_out,
                    weights: (0..n_in * n_out)
                        .map(|_| rng.random_range(-bound..bound))
                        .collect(),
                    bias: vec![0.0; n_out],
                }
            })
            .collect();
        Network { layers }
    }

    pub fn n_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.n_parameters());
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = theta[k];
                k += 1;
            }
        }
    }

    /// Activations per layer, input first.
    fn activations(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.clone()];
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = acts[k].clone() * layer.w().transpose();
            let b = DVector::from_column_slice(&layer.bias);
            for mut row in z.row_iter_mut() {
                row += b.transpose();
            }
            if k < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    /// Predictions for already standardized inputs.
    pub fn forward(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.activations(x)
            .pop()
            .expect("network has layers")
            .column(0)
            .iter()
            .copied()
            .collect()
    }

    /// Batch loss and its gradient in [`Network::parameters`] order.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, y: &[f64], l2_alpha: f64) -> (f64, Vec<f64>) {
        let m = x.nrows() as f64;
        let acts = self.activations(x);
        let out = acts.last().expect("network has layers");
        let resid = DMatrix::from_fn(x.nrows(), 1, |i, _| out[(i, 0)] - y[i]);
        let mut loss = 0.5 * resid.norm_squared() / m;
        loss += 0.5 * l2_alpha / m
            * self
                .layers
                .iter()
                .flat_map(|l| &l.weights)
                .map(|w| w * w)
                .sum::<f64>();

        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(self.layers.len());
        let mut delta = resid / m;
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let w = layer.w();
            let gw = delta.transpose() * &acts[k] + &w * (l2_alpha / m);
            let gb: Vec<f64> = delta.column_iter().map(|c| c.sum()).collect();
            let gw_rows: Vec<f64> = (0..gw.nrows())
                .flat_map(|i| gw.row(i).iter().copied().collect::<Vec<_>>())
                .collect();
            grads.push((gw_rows, gb));
            if k > 0 {
                let mut back = &delta * &w;
                back.zip_apply(&acts[k], |d, a| *d *= 1.0 - a * a);
                delta = back;
            }
        }
        grads.reverse();
        let flat = grads
            .into_iter()
            .flat_map(|(w, b)| w.into_iter().chain(b))
            .collect();
        (loss, flat)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Adam {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for k in 0..theta.len() {
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * grad[k];
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * grad[k] * grad[k];
            theta[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

fn rows_of(z: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), z.ncols(), |i, j| z[(idx[i], j)])
}

pub fn fit_mlp(x: &DMatrix<f64>, y: &[f64], params: &MlpParams) -> Result<FitOutcome> {
    params.validate()?;
    check_training_data(x, y)?;
    let n = x.nrows();
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut net = Network::init(x.ncols(), &params.hidden, rng.random());

    let mut order: Vec<usize> = (0..n).collect();
    let n_val = (params.validation_fraction * n as f64).ceil() as usize;
    let (train_idx, val_idx) = if params.validation_fraction > 0.0 && n_val >= 1 && n - n_val >= 1 {
        order.shuffle(&mut rng);
        let (v, t) = order.split_at(n_val);
        let (mut t, mut v) = (t.to_vec(), v.to_vec());
        t.sort_unstable();
        v.sort_unstable();
        (t, v)
    } else {
        (order, Vec::new())
    };
    let x_val = rows_of(&z, &val_idx);
    let y_val: Vec<f64> = val_idx.iter().map(|&i| y[i]).collect();
    let x_train = rows_of(&z, &train_idx);
    let y_train: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();

    let mut theta = net.parameters();
    let mut adam = Adam::new(theta.len(), params.learning_rate);
    let mut best = (f64::INFINITY, theta.clone());
    let mut stale = 0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut perm: Vec<usize> = (0..train_idx.len()).collect();
    let mut epochs = 0;

    while epochs < params.max_epochs {
        epochs += 1;
        perm.shuffle(&mut rng);
        for batch in perm.chunks(params.batch_size) {
            let xb = rows_of(&x_train, batch);
            let yb: Vec<f64> = batch.iter().map(|&i| y_train[i]).collect();
            let (loss, grad) = net.loss_and_gradient(&xb, &yb, params.l2_alpha);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite loss at epoch {epochs}"
                )));
            }
            adam.step(&mut theta, &grad);
            net.set_parameters(&theta);
        }
        let (train_loss, _) = net.loss_and_gradient(&x_train, &y_train, params.l2_alpha);
        if !train_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss at epoch {epochs}"
            )));
        }
        trace.push(train_loss);

        let monitored = if val_idx.is_empty() {
            train_loss
        } else {
            let pred = net.forward(&x_val);
            0.5 * pred
                .iter()
                .zip(&y_val)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / y_val.len() as f64
        };
        if monitored < best.0 - params.tol {
            best = (monitored, theta.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= params.patience {
                converged = true;
                break;
            }
        }
    }
    if !val_idx.is_empty() {
        net.set_parameters(&best.1);
    }

    let model = TrainedModel::new(standardizer, ModelParams::Mlp { network: net });
    Ok(FitOutcome {
        model,
        converged,
        iterations: epochs,
        objective_trace: trace,
    }
    .warn_if_not_converged("MLP"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn toy(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (0..n)
            .map(|i| x[(i, 0)].sin() + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (x, y)
    }

    fn central_difference_error(net: &Network, x: &DMatrix<f64>, y: &[f64], l2: f64) -> f64 {
        let (_, grad) = net.loss_and_gradient(x, y, l2);
        let theta = net.parameters();
        let h = 1e-5;
        let mut probe = net.clone();
        let mut worst: f64 = 0.0;
        for k in 0..theta.len() {
            let mut t = theta.clone();
            t[k] += h;
            probe.set_parameters(&t);
            let up = probe.loss_and_gradient(x, y, l2).0;
            t[k] -= 2.0 * h;
            probe.set_parameters(&t);
            let down = probe.loss_and_gradient(x, y, l2).0;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - grad[k]).abs() / (fd.abs() + grad[k].abs()).max(1e-7));
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences_on_toy_net() {
        let (x, y) = toy(3, 2, 1);
        for hidden in [vec![4], vec![3, 5]] {
            let net = Network::init(2, &hidden, 7);
            assert!(central_difference_error(&net, &x, &y, 0.3) < 1e-5);
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        let (x, y) = toy(60, 3, 2);
        let mut params = MlpParams::new(vec![8], 0.01);
        params.max_epochs = 30;
        params.seed = 11;
        let a = fit_mlp(&x, &y, &params).unwrap();
        let b = fit_mlp(&x, &y, &params).unwrap();
        assert_eq!(a.model, b.model);
        params.seed = 12;
        assert_ne!(fit_mlp(&x, &y, &params).unwrap().model, a.model);
    }

    #[test]
    fn parameter_round_trip_and_layout() {
        let net = Network::init(3, &[4, 2], 0);
        assert_eq!(net.n_parameters(), 3 * 4 + 4 + 4 * 2 + 2 + 2 + 1);
        let mut copy = net.clone();
        copy.set_parameters(&net.parameters());
        assert_eq!(copy, net);
        let bound = 1.0f64;
        assert!(net.layers[0].weights.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn divergence_is_an_error() {
        let (x, mut y) = toy(20, 2, 3);
        y.iter_mut().for_each(|v| *v *= 1e300);
        let mut params = MlpParams::new(vec![4], 0.0);
        params.learning_rate = 1e10;
        assert!(matches!(fit_mlp(&x, &y, &params), Err(Error::Diverged(_))));
    }

    #[test]
    fn full_batch_training_is_row_order_invariant() {
        let (x, y) = toy(24, 2, 4);
        let perm: Vec<usize> = (0..24).map(|i| (i * 5) % 24).collect();
        let xp = DMatrix::from_fn(24, 2, |i, j| x[(perm[i], j)]);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let mut params = MlpParams::new(vec![6], 0.01);
        params.batch_size = 24;
        params.validation_fraction = 0.0;
        params.max_epochs = 200;
        params.learning_rate = 0.01;
        let a = fit_mlp(&x, &y, &params).unwrap().model.predict(&x).unwrap();
        let b = fit_mlp(&xp, &yp, &params)
            .unwrap()
            .model
            .predict(&x)
            .unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-6);
        }
    }
}
