//! Conjugate Gibbs sampler for the one-factor model
//! `x_ij = nu_j + lambda_j * eta_i + e_ij`, `e_ij ~ N(0, 1 / tau_j)`,
//! `eta_i ~ N(0, 1)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

#[cfg(test)]
use super::NormalPrior;
use super::{Priors, ResidualPrior, ResidualScale};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct State {
    pub loadings: Vec<f64>,
    pub intercepts: Vec<f64>,
    /// Residual precisions `1 / epsilon_j`.
    pub precisions: Vec<f64>,
    pub latent: Vec<f64>,
}

impl State {
    /// Over-dispersed starting point for a chain.
    pub fn initial<R: Rng>(p: usize, n: usize, rng: &mut R) -> Self {
        State {
            loadings: (0..p).map(|_| rng.random_range(0.2..1.5)).collect(),
            intercepts: (0..p).map(|_| rng.random_range(-0.5..0.5)).collect(),
            precisions: (0..p).map(|_| rng.random_range(0.5..4.0)).collect(),
            latent: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        }
    }

    /// A draw from the prior, with the sign convention applied.
    #[cfg(test)]
    pub fn from_prior<R: Rng>(p: usize, n: usize, priors: &Priors, rng: &mut R) -> Self {
        let normal = |prior: &NormalPrior, rng: &mut R| {
            prior.mean + prior.sd * rng.sample::<f64, _>(StandardNormal)
        };
        let mut s = State {
            loadings: (0..p).map(|_| normal(&priors.loading, rng)).collect(),
            intercepts: (0..p).map(|_| normal(&priors.intercept, rng)).collect(),
            precisions: (0..p)
                .map(|_| precision_from_prior(&priors.residual, rng))
                .collect(),
            latent: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        };
        s.reflect_if_needed();
        s
    }

    /// Flips loadings and latent scores together when the first loading is negative.
    pub fn reflect_if_needed(&mut self) {
        if self.loadings[0] < 0.0 {
            self.loadings.iter_mut().for_each(|l| *l = -*l);
            self.latent.iter_mut().for_each(|e| *e = -*e);
        }
    }
}

fn sample_gamma<R: Rng>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate.max(f64::MIN_POSITIVE))
        .expect("gamma parameters are positive")
        .sample(rng)
        .max(f64::MIN_POSITIVE)
}

#[cfg(test)]
fn precision_from_prior<R: Rng>(prior: &ResidualPrior, rng: &mut R) -> f64 {
    let g = sample_gamma(prior.gamma.shape, prior.gamma.rate, rng);
    match prior.scale {
        ResidualScale::Precision => g,
        ResidualScale::Sd => (1.0 / (g * g)).min(f64::MAX),
    }
}

/// Draws the residual precision given `n` residuals with sum of squares `ssr`.
///
/// With the prior on the SD the conditional is
/// `tau^(n/2 - a/2 - 1) exp(-tau ssr / 2 - b / sqrt(tau))`; a
/// `Gamma(n/2 - a/2, ssr/2)` independence proposal leaves only the
/// `exp(-b sigma)` factor in the acceptance ratio.
fn sample_precision<R: Rng>(
    prior: &ResidualPrior,
    n: usize,
    ssr: f64,
    current: f64,
    rng: &mut R,
) -> f64 {
    let half_n = n as f64 / 2.0;
    let g = &prior.gamma;
    match prior.scale {
        ResidualScale::Precision => sample_gamma(g.shape + half_n, g.rate + ssr / 2.0, rng),
        ResidualScale::Sd => {
            let proposal = sample_gamma(half_n - g.shape / 2.0, ssr / 2.0, rng);
            let log_ratio = -g.rate * (proposal.sqrt().recip() - current.sqrt().recip());
            if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                proposal
            } else {
                current
            }
        }
    }
}

/// One full sweep over all conditionals: latent scores, then per indicator
/// the (intercept, loading) pair jointly, then the residual precision.
pub(crate) fn sweep<R: Rng>(x: &DMatrix<f64>, s: &mut State, priors: &Priors, rng: &mut R) {
    let (n, p) = (x.nrows(), x.ncols());

    for i in 0..n {
        let mut prec = 1.0;
        let mut acc = 0.0;
        for j in 0..p {
            let lt = s.loadings[j] * s.precisions[j];
            prec += s.loadings[j] * lt;
            acc += lt * (x[(i, j)] - s.intercepts[j]);
        }
        let z: f64 = rng.sample(StandardNormal);
        s.latent[i] = acc / prec + z / prec.sqrt();
    }

    let sum_eta: f64 = s.latent.iter().sum();
    let sum_eta2: f64 = s.latent.iter().map(|e| e * e).sum();
    let nu_prior_prec = 1.0 / (priors.intercept.sd * priors.intercept.sd);
    let la_prior_prec = 1.0 / (priors.loading.sd * priors.loading.sd);

    for j in 0..p {
        let tau = s.precisions[j];
        let col = x.column(j);
        let sum_x: f64 = col.iter().sum();
        let sum_ex: f64 = col.iter().zip(&s.latent).map(|(v, e)| v * e).sum();

        // 2x2 posterior precision and right-hand side
        let a = nu_prior_prec + tau * n as f64;
        let b = tau * sum_eta;
        let c = la_prior_prec + tau * sum_eta2;
        let r0 = nu_prior_prec * priors.intercept.mean + tau * sum_x;
        let r1 = la_prior_prec * priors.loading.mean + tau * sum_ex;
        let det = a * c - b * b;
        let m0 = (c * r0 - b * r1) / det;
        let m1 = (a * r1 - b * r0) / det;

        // precision = L L^T; draw = mean + L^{-T} z
        let l00 = a.sqrt();
        let l10 = b / l00;
        let l11 = (c - l10 * l10).sqrt();
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let y1 = z1 / l11;
        let y0 = (z0 - l10 * y1) / l00;
        s.intercepts[j] = m0 + y0;
        s.loadings[j] = m1 + y1;

        let ssr: f64 = col
            .iter()
            .zip(&s.latent)
            .map(|(v, e)| {
                let r = v - s.intercepts[j] - s.loadings[j] * e;
                r * r
            })
            .sum();
        s.precisions[j] = sample_precision(&priors.residual, n, ssr, tau, rng);
    }

    shift_move(s, priors, rng);
    for _ in 0..SCALE_STEPS {
        scale_move(x.ncols(), s, priors, rng);
    }
    s.reflect_if_needed();
}

const SCALE_STEPS: usize = 2;

/// Exact draw along the likelihood-preserving translation
/// `eta_i + d`, `nu_j - lambda_j * d`. The conditional of `d` is Gaussian.
fn shift_move<R: Rng>(s: &mut State, priors: &Priors, rng: &mut R) {
    let n = s.latent.len() as f64;
    let inv_var = 1.0 / (priors.intercept.sd * priors.intercept.sd);
    let mut prec = n;
    let mut acc = -s.latent.iter().sum::<f64>();
    for (l, nu) in s.loadings.iter().zip(&s.intercepts) {
        prec += l * l * inv_var;
        acc += l * (nu - priors.intercept.mean) * inv_var;
    }
    let z: f64 = rng.sample(StandardNormal);
    let d = acc / prec + z / prec.sqrt();
    s.latent.iter_mut().for_each(|e| *e += d);
    for (nu, l) in s.intercepts.iter_mut().zip(&s.loadings) {
        *nu -= l * d;
    }
}

/// Metropolis step along the likelihood-preserving rescaling
/// `eta_i * c`, `lambda_j / c`, on `log c` (the group's invariant measure).
fn scale_move<R: Rng>(p: usize, s: &mut State, priors: &Priors, rng: &mut R) {
    let n = s.latent.len();
    let sum_eta2: f64 = s.latent.iter().map(|e| e * e).sum();
    let prior = &priors.loading;
    let log_target = |log_c: f64| -> f64 {
        let c = log_c.exp();
        let loading_term: f64 = s
            .loadings
            .iter()
            .map(|l| ((l / c - prior.mean) / prior.sd).powi(2))
            .sum();
        -0.5 * (c * c * sum_eta2 + loading_term) + (n as f64 - p as f64) * log_c
    };
    let step = 1.7 / ((n + p) as f64).sqrt();
    let proposal = step * rng.sample::<f64, _>(StandardNormal);
    let log_ratio = log_target(proposal) - log_target(0.0);
    if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
        let c = proposal.exp();
        s.latent.iter_mut().for_each(|e| *e *= c);
        s.loadings.iter_mut().for_each(|l| *l /= c);
    }
}
