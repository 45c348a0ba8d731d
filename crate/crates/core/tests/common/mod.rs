//! Reference implementations used as test oracles. Written directly from
//! the textbook definitions, without sharing code with the library.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Column-standardizes with population SD; constant columns become 0.
pub fn standardize(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len() as f64;
    let p = x[0].len();
    let mut out = vec![vec![0.0; p]; x.len()];
    for j in 0..p {
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        if sd > 1e-12 {
            for i in 0..x.len() {
                out[i][j] = (x[i][j] - mean) / sd;
            }
        }
    }
    out
}

/// Elastic Net objective evaluated from residuals, with the intercept at
/// the mean of `y` (optimal for centered features).
pub fn enet_objective(z: &[Vec<f64>], y: &[f64], beta: &[f64], alpha: f64, lambda: f64) -> f64 {
    let n = y.len() as f64;
    let ym = y.iter().sum::<f64>() / n;
    let sse: f64 = z
        .iter()
        .zip(y)
        .map(|(row, yi)| {
            let f: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            (yi - ym - f).powi(2)
        })
        .sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    sse / (2.0 * n) + alpha * (lambda * l1 + 0.5 * (1.0 - lambda) * l2)
}

/// Coarse-to-fine exhaustive grid minimization of a 2-D convex function,
/// ending at step 1e-4.
pub fn grid_minimize_2d(f: impl Fn(f64, f64) -> f64, radius: f64) -> (f64, f64, f64) {
    let mut center = (0.0, 0.0);
    let mut half = radius;
    let mut step = radius / 50.0;
    let mut best = (f(0.0, 0.0), 0.0, 0.0);
    while step >= 1e-4 * 0.999 {
        let k = (half / step).round() as i64;
        for a in -k..=k {
            for b in -k..=k {
                let (u, v) = (center.0 + a as f64 * step, center.1 + b as f64 * step);
                let val = f(u, v);
                if val < best.0 {
                    best = (val, u, v);
                }
            }
        }
        center = (best.1, best.2);
        half = 2.0 * step;
        step /= 10.0;
    }
    best
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>()).exp()
}

pub struct SvrOracle {
    pub beta: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub z: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl SvrOracle {
    pub fn predict(&self, z_new: &[f64]) -> f64 {
        self.bias
            + self
                .z
                .iter()
                .zip(&self.beta)
                .map(|(zi, b)| b * rbf(zi, z_new, self.gamma))
                .sum::<f64>()
    }
}

/// Euclidean projection onto `{0 <= a <= C, sum_i a_i - sum_i a*_i = 0}` by
/// bisection on the multiplier of the equality constraint.
fn project(v: &[f64], n: usize, c: f64) -> Vec<f64> {
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let at = |mu: f64| -> (Vec<f64>, f64) {
        let a: Vec<f64> = (0..2 * n)
            .map(|t| (v[t] - mu * sign(t)).clamp(0.0, c))
            .collect();
        let s = (0..2 * n).map(|t| sign(t) * a[t]).sum();
        (a, s)
    };
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi)).0
}

/// Projected-gradient solution of the epsilon-SVR dual on standardized
/// inputs, run to high precision.
pub fn svr_dual_oracle(x: &[Vec<f64>], y: &[f64], c: f64, gamma: f64, eps: f64) -> SvrOracle {
    let z = standardize(x);
    let n = y.len();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| rbf(&z[i], &z[j], gamma)).collect())
        .collect();
    let objective_of = |a: &[f64]| -> f64 {
        let beta: Vec<f64> = (0..n).map(|i| a[i] - a[i + n]).collect();
        let quad: f64 = (0..n)
            .map(|i| (0..n).map(|j| beta[i] * beta[j] * k[i][j]).sum::<f64>())
            .sum();
        let lin: f64 = (0..n)
            .map(|i| eps * (a[i] + a[i + n]) - y[i] * beta[i])
            .sum();
        0.5 * quad + lin
    };
    let step = 1.0 / (2.0 * n as f64);
    let mut a = vec![0.0; 2 * n];
    for _ in 0..400_000 {
        let beta: Vec<f64> = (0..n).map(|i| a[i] - a[i + n]).collect();
        let kb: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| k[i][j] * beta[j]).sum())
            .collect();
        let grad: Vec<f64> = (0..2 * n)
            .map(|t| {
                if t < n {
                    kb[t] + eps - y[t]
                } else {
                    -kb[t - n] + eps + y[t - n]
                }
            })
            .collect();
        let v: Vec<f64> = (0..2 * n).map(|t| a[t] - step * grad[t]).collect();
        let next = project(&v, n, c);
        let moved = next
            .iter()
            .zip(&a)
            .map(|(u, w)| (u - w).abs())
            .fold(0.0, f64::max);
        a = next;
        if moved < 1e-15 {
            break;
        }
    }
    let beta: Vec<f64> = (0..n).map(|i| a[i] - a[i + n]).collect();
    let g: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| k[i][j] * beta[j]).sum())
        .collect();
    let free: Vec<f64> = (0..n)
        .filter(|&i| beta[i].abs() > 1e-7 && beta[i].abs() < c - 1e-7)
        .map(|i| y[i] - g[i] - eps * beta[i].signum())
        .collect();
    let bias = if free.is_empty() {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let r = y[i] - g[i];
            if beta[i].abs() <= 1e-7 {
                lo = lo.max(r - eps);
                hi = hi.min(r + eps);
            } else if beta[i] > 0.0 {
                hi = hi.min(r - eps);
            } else {
                lo = lo.max(r + eps);
            }
        }
        0.5 * (lo + hi)
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };
    SvrOracle {
        objective: objective_of(&a),
        beta,
        bias,
        z,
        gamma,
    }
}

/// ICC(A,k) from the two-way ANOVA mean squares, computed by explicit sums.
pub fn icc_a_k_oracle(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let k = m[0].len();
    let grand: f64 = m.iter().flatten().sum::<f64>() / (n * k) as f64;
    let row_means: Vec<f64> = m.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| m.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let ss_rows: f64 = row_means.iter().map(|r| (r - grand).powi(2)).sum::<f64>() * k as f64;
    let ss_cols: f64 = col_means.iter().map(|c| (c - grand).powi(2)).sum::<f64>() * n as f64;
    let ss_total: f64 = m.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ss_err = ss_total - ss_rows - ss_cols;
    let msr = ss_rows / (n - 1) as f64;
    let msc = ss_cols / (k - 1) as f64;
    let mse = ss_err / ((n - 1) * (k - 1)) as f64;
    (msr - mse) / (msr + (msc - mse) / n as f64)
}

/// Percentile bootstrap of the median, coded separately from the library:
/// same RNG stream, explicit loops, explicit linear-interpolation quantile.
pub fn bootstrap_median_oracle(d: &[f64], resamples: usize, seed: u64) -> (f64, f64, Vec<f64>) {
    fn median(v: &mut [f64]) -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        quantile(v, 0.5)
    }
    fn quantile(sorted: &[f64], q: f64) -> f64 {
        let h = (sorted.len() - 1) as f64 * q;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sample: Vec<f64> = Vec::with_capacity(d.len());
        for _ in 0..d.len() {
            sample.push(d[rng.random_range(0..d.len())]);
        }
        stats.push(median(&mut sample));
    }
    let mut sorted = stats.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (quantile(&sorted, 0.025), quantile(&sorted, 0.975), stats)
}

/// Checks group integrity and per-quartile balance of one fold split.
/// `fold_of` gives the fold of each participant (`None` = not in the split);
/// quartiles are recomputed over the groups in the split by rank of mean
/// label, ties by group id.
pub fn fold_split_violation(
    labels: &[f64],
    group_ids: &[String],
    fold_of: &[Option<usize>],
    k: usize,
) -> Option<String> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<Option<usize>>)> = BTreeMap::new();
    for i in 0..labels.len() {
        let e = groups.entry(group_ids[i].as_str()).or_default();
        e.0.push(labels[i]);
        e.1.push(fold_of[i]);
    }
    let mut split: Vec<(f64, &str, usize)> = Vec::new();
    for (g, (ls, fs)) in &groups {
        if fs.iter().any(|f| *f != fs[0]) {
            return Some(format!("group {g} is split across folds"));
        }
        if let Some(f) = fs[0] {
            if f >= k {
                return Some(format!("group {g} has fold {f} >= {k}"));
            }
            split.push((ls.iter().sum::<f64>() / ls.len() as f64, g, f));
        }
    }
    split.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(b.1)));
    let n = split.len();
    let mut counts = vec![vec![0usize; k]; 4];
    let mut totals = vec![0usize; k];
    for (rank, &(_, _, f)) in split.iter().enumerate() {
        counts[4 * rank / n][f] += 1;
        totals[f] += 1;
    }
    for (q, c) in counts.iter().enumerate() {
        let (lo, hi) = (c.iter().min().unwrap(), c.iter().max().unwrap());
        if hi - lo > 1 {
            return Some(format!("quartile {q} counts {c:?}"));
        }
    }
    let (lo, hi) = (totals.iter().min().unwrap(), totals.iter().max().unwrap());
    if hi - lo > 1 {
        return Some(format!("fold totals {totals:?}"));
    }
    None
}
