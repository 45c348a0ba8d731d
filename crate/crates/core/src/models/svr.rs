//! Epsilon-SVR with an RBF kernel, solved by SMO with second-order working
//! set selection.
//!
//! The dual is written over `2n` variables `a = (alpha, alpha*)` with signs
//! `s = (+1, -1)`:
//! `min 1/2 a'Qa + p'a`, `Q_ij = s_i s_j K_ij`, `p = (eps - y, eps + y)`,
//! subject to `0 <= a <= C` and `s'a = 0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_training_data, FitOutcome, ModelParams, Standardizer, TrainedModel};
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub gamma: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_tol() -> f64 {
    1e-4
}

fn default_max_iter() -> usize {
    10_000_000
}

impl SvrParams {
    pub fn new(c: f64, gamma: f64) -> SvrParams {
        SvrParams {
            c,
            gamma,
            epsilon: default_epsilon(),
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C must be > 0, got {}", self.c)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("tol and max_iter must be positive".into()));
        }
        Ok(())
    }
}

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
    (-gamma * d2).exp()
}

struct Solver<'a> {
    k: &'a DMatrix<f64>,
    n: usize,
    c: f64,
    sign: Vec<f64>,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl Solver<'_> {
    fn q(&self, i: usize, j: usize) -> f64 {
        self.sign[i] * self.sign[j] * self.k[(i % self.n, j % self.n)]
    }

    fn qd(&self, i: usize) -> f64 {
        self.k[(i % self.n, i % self.n)]
    }

    fn at_upper(&self, i: usize) -> bool {
        self.alpha[i] >= self.c
    }

    fn at_lower(&self, i: usize) -> bool {
        self.alpha[i] <= 0.0
    }

    /// Returns the maximal-violating first index, the second-order partner and
    /// the current violation `m(a) - M(a)`.
    fn select(&self) -> (Option<usize>, Option<usize>, f64) {
        let l = self.alpha.len();
        let mut gmax = f64::NEG_INFINITY;
        let mut first = None;
        for t in 0..l {
            let v = if self.sign[t] > 0.0 {
                (!self.at_upper(t)).then(|| -self.grad[t])
            } else {
                (!self.at_lower(t)).then(|| self.grad[t])
            };
            if let Some(v) = v {
                if v >= gmax {
                    gmax = v;
                    first = Some(t);
                }
            }
        }
        let Some(i) = first else {
            return (None, None, 0.0);
        };

        let mut gmax2 = f64::NEG_INFINITY;
        let mut second = None;
        let mut best = f64::INFINITY;
        for t in 0..l {
            let (eligible, g) = if self.sign[t] > 0.0 {
                (!self.at_lower(t), self.grad[t])
            } else {
                (!self.at_upper(t), -self.grad[t])
            };
            if !eligible {
                continue;
            }
            gmax2 = gmax2.max(g);
            let diff = gmax + g;
            if diff > 0.0 {
                let quad =
                    self.qd(i) + self.qd(t) - 2.0 * self.sign[i] * self.sign[t] * self.q(i, t);
                let obj = -diff * diff / if quad > 0.0 { quad } else { TAU };
                if obj <= best {
                    best = obj;
                    second = Some(t);
                }
            }
        }
        (Some(i), second, gmax + gmax2)
    }

    fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let qij = self.q(i, j);
        if self.sign[i] != self.sign[j] {
            let quad = (self.qd(i) + self.qd(j) + 2.0 * qij).max(TAU);
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = old_i - old_j;
            let (mut ai, mut aj) = (old_i + delta, old_j + delta);
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
            self.alpha[i] = ai;
            self.alpha[j] = aj;
        } else {
            let quad = (self.qd(i) + self.qd(j) - 2.0 * qij).max(TAU);
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = old_i + old_j;
            let (mut ai, mut aj) = (old_i - delta, old_j + delta);
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
            self.alpha[i] = ai;
            self.alpha[j] = aj;
        }
        let (di, dj) = (self.alpha[i] - old_i, self.alpha[j] - old_j);
        for t in 0..self.alpha.len() {
            self.grad[t] += self.q(t, i) * di + self.q(t, j) * dj;
        }
    }

    /// Bias `b` in `f(x) = sum beta_i K(x_i, x) + b`: the mean over free
    /// variables, or the midpoint of the feasible interval when none are free.
    fn bias(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut sum_free, mut n_free) = (0.0, 0usize);
        for t in 0..self.alpha.len() {
            let yg = self.sign[t] * self.grad[t];
            let upper = self.at_upper(t);
            let lower = self.at_lower(t);
            if (upper && self.sign[t] < 0.0) || (lower && self.sign[t] > 0.0) {
                ub = ub.min(yg);
            } else if upper || lower {
                lb = lb.max(yg);
            } else {
                sum_free += yg;
                n_free += 1;
            }
        }
        let rho = if n_free > 0 {
            sum_free / n_free as f64
        } else {
            (ub + lb) / 2.0
        };
        -rho
    }

    fn objective(&self, p: &[f64]) -> f64 {
        0.5 * self
            .alpha
            .iter()
            .zip(&self.grad)
            .zip(p)
            .map(|((a, g), p)| a * (g + p))
            .sum::<f64>()
    }
}

pub fn fit_svr(x: &DMatrix<f64>, y: &[f64], params: &SvrParams) -> Result<FitOutcome> {
    params.validate()?;
    check_training_data(x, y)?;
    let n = x.nrows();
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x)?;
    let rows: Vec<Vec<f64>> = z.row_iter().map(|r| r.iter().copied().collect()).collect();
    let k = DMatrix::from_fn(n, n, |i, j| rbf_kernel(&rows[i], &rows[j], params.gamma));

    let p: Vec<f64> = (0..2 * n)
        .map(|t| {
            if t < n {
                params.epsilon - y[t]
            } else {
                params.epsilon + y[t - n]
            }
        })
        .collect();
    let mut solver = Solver {
        k: &k,
        n,
        c: params.c,
        sign: (0..2 * n).map(|t| if t < n { 1.0 } else { -1.0 }).collect(),
        alpha: vec![0.0; 2 * n],
        grad: p.clone(),
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        let (i, j, gap) = solver.select();
        let (Some(i), Some(j)) = (i, j) else {
            converged = true;
            break;
        };
        if gap < params.tol {
            converged = true;
            break;
        }
        solver.update(i, j);
        iterations += 1;
    }

    let bias = solver.bias();
    let mut support_vectors = Vec::new();
    let mut dual_coefficients = Vec::new();
    let mut support_indices = Vec::new();
    for (i, row) in rows.iter().enumerate().take(n) {
        let beta = solver.alpha[i] - solver.alpha[i + n];
        if beta != 0.0 {
            support_vectors.push(row.clone());
            dual_coefficients.push(beta);
            support_indices.push(i);
        }
    }
    let objective = solver.objective(&p);
    let model = TrainedModel::new(
        standardizer,
        ModelParams::Svr {
            gamma: params.gamma,
            c: params.c,
            support_vectors,
            dual_coefficients,
            support_indices,
            bias,
        },
    );
    Ok(FitOutcome {
        model,
        converged,
        iterations,
        objective_trace: vec![objective],
    }
    .warn_if_not_converged("SVR"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: DMatrix<f64> = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
        let y = (0..n)
            .map(|i| (x[(i, 0)]).sin() + 0.3 * x[(i, 1)] + rng.random_range(-0.2..0.2))
            .collect();
        (x, y)
    }

    fn duals(out: &FitOutcome) -> (Vec<usize>, Vec<f64>, f64, f64) {
        match &out.model.params {
            ModelParams::Svr {
                support_indices,
                dual_coefficients,
                bias,
                c,
                ..
            } => (
                support_indices.clone(),
                dual_coefficients.clone(),
                *bias,
                *c,
            ),
            _ => unreachable!(),
        }
    }

    #[test]
    fn constant_target_has_no_support_vectors() {
        let (x, _) = data(12, 1);
        let out = fit_svr(&x, &[2.5; 12], &SvrParams::new(1.0, 0.5)).unwrap();
        let (sv, _, _, _) = duals(&out);
        assert!(sv.is_empty());
        assert!(out
            .model
            .predict(&x)
            .unwrap()
            .iter()
            .all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn tube_and_box_conditions_hold() {
        for seed in 0..10 {
            let (x, y) = data(30, seed);
            let params = SvrParams::new(2.0, 0.5);
            let out = fit_svr(&x, &y, &params).unwrap();
            assert!(out.converged);
            let (sv, beta, _, c) = duals(&out);
            let f = out.model.predict(&x).unwrap();
            let mut b = vec![0.0; 30];
            for (i, v) in sv.iter().zip(&beta) {
                b[*i] = *v;
            }
            for i in 0..30 {
                assert!(b[i].abs() <= c);
                let r = y[i] - f[i];
                let eps = params.epsilon;
                let tol = params.tol;
                if b[i] == 0.0 {
                    assert!(r.abs() <= eps + tol, "seed {seed} point {i}: r = {r}");
                } else if b[i].abs() < c {
                    assert!(
                        (r.abs() - eps).abs() <= tol && r * b[i] > 0.0,
                        "seed {seed} point {i}: r = {r}"
                    );
                } else {
                    assert!(r * b[i].signum() >= eps - tol);
                }
            }
            assert!(beta.iter().sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let (x, y) = data(5, 0);
        assert!(fit_svr(&x, &y, &SvrParams::new(0.0, 1.0)).is_err());
        assert!(fit_svr(&x, &y, &SvrParams::new(1.0, -1.0)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn row_permutation_invariant(seed in 0u64..1000, log_c in -3.0f64..5.0, log_g in -4.0f64..2.0) {
            let (x, y) = data(12, seed);
            let perm: Vec<usize> = (0..12).map(|i| (i * 5) % 12).collect();
            let xp = DMatrix::from_fn(12, 2, |i, j| x[(perm[i], j)]);
            let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
            let mut params = SvrParams::new(log_c.exp2(), log_g.exp2());
            params.tol = 1e-10;
            let a = fit_svr(&x, &y, &params).unwrap().model.predict(&x).unwrap();
            let b = fit_svr(&xp, &yp, &params).unwrap().model.predict(&x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-6);
            }
        }
    }
}
