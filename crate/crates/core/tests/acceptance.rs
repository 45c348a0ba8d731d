//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use expressiveness::evaluation::{
    bootstrap_compare, bootstrap_median, coefficient_summary, make_folds, metrics, nested_cv,
    resample_medians, CvOptions, EvaluationRecord, HyperParamGrid, Metric, MlpGrid, SvrGrid,
};
use expressiveness::latent::{
    fit_cfa, fit_indices, sample_covariance, CfaConfig, ParameterKind, RHAT_THRESHOLD,
};
use expressiveness::models::{
    fit_elastic_net, fit_svr, Algorithm, ElasticNetParams, MlpParams, ModelParams, Network,
    SvrParams,
};
use expressiveness::reliability::icc_average_raters;
use expressiveness::synth::{generate_synthetic, SynthConfig};
use expressiveness::visual::{
    align_landmarks, fit_affine, kinematics, AuChannels, IntervalTrack, Record,
};
use expressiveness::{zscore, Dataset, ModalitySelection, RatingMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s as f64, || {
        format!(
            "{what} took {:.1} s, limit {limit_s} s",
            elapsed.as_secs_f64()
        )
    })
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn ac1_icc_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(4..=30);
        let k = rng.random_range(2..=10);
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| rng.random_range(0.0..=4.0)).collect())
            .collect();
        let got = icc_average_raters(
            &RatingMatrix::from_grid("q", scores.clone()).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?
        .icc;
        worst = worst.max((got - common::icc_a_k_oracle(&scores)).abs());
    }
    ensure(worst <= 1e-10, || format!("max |ICC - oracle| = {worst:e}"))?;
    for trial in 0..20 {
        let n = rng.random_range(4..=30);
        let k = rng.random_range(2..=10);
        let scores: Vec<Vec<f64>> = (0..n).map(|i| vec![(i % 5) as f64; k]).collect();
        let icc =
            icc_average_raters(&RatingMatrix::from_grid("q", scores).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?
                .icc;
        ensure(icc == 1.0, || {
            format!("perfect agreement trial {trial} gave {icc}")
        })?;
    }
    within(start.elapsed(), 5, "ICC checks")?;
    Ok(format!("max |ICC - oracle| = {worst:.1e}"))
}

fn ac2_cfa_recovery() -> Outcome {
    let start = Instant::now();
    let config = SynthConfig::default();
    let truth: Vec<f64> = config
        .loadings
        .iter()
        .chain(&config.residual_variances)
        .copied()
        .collect();
    let mut recovered = 0;
    let mut worst_rhat: f64 = 0.0;
    let mut min_index = f64::INFINITY;
    for seed in 0..20 {
        let s = generate_synthetic(&config, seed).map_err(|e| e.to_string())?;
        let post =
            fit_cfa(&s.question_means, &CfaConfig::with_seed(seed)).map_err(|e| e.to_string())?;
        let est: Vec<f64> = post
            .posterior_means(ParameterKind::Loading)
            .into_iter()
            .chain(post.posterior_means(ParameterKind::ResidualVariance))
            .collect();
        if est.iter().zip(&truth).all(|(e, t)| (e - t).abs() <= 0.15) {
            recovered += 1;
        }
        worst_rhat = worst_rhat.max(post.max_rhat);
        let z = s.question_means.standardized().map_err(|e| e.to_string())?;
        let fit =
            fit_indices(&post, &sample_covariance(&z), z.nrows()).map_err(|e| e.to_string())?;
        min_index = min_index.min(fit.gamma_hat).min(fit.cfi);
    }
    let elapsed = start.elapsed();
    let detail = format!("{recovered}/20 recovered, max split-Rhat {worst_rhat:.4}, min Gamma-hat/CFI {min_index:.4}");
    ensure(recovered >= 18, || detail.clone())?;
    ensure(worst_rhat <= RHAT_THRESHOLD, || detail.clone())?;
    ensure(min_index >= 0.95, || detail.clone())?;
    within(elapsed, 120, "20 CFA fits")?;
    Ok(detail)
}

fn standardized_rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    common::standardize(
        &x.row_iter()
            .map(|r| r.iter().copied().collect())
            .collect::<Vec<_>>(),
    )
}

fn check_trace(trace: &[f64]) -> Result<(), String> {
    for w in trace.windows(2) {
        ensure(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), || {
            format!("objective rose from {} to {}", w[0], w[1])
        })?;
    }
    Ok(())
}

fn ac3_elastic_net_oracle() -> Outcome {
    let grid = HyperParamGrid::default().elastic_net;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut fits = 0;
    for _ in 0..50 {
        let n = 30;
        let rho = rng.random_range(-0.8..0.8);
        let x = DMatrix::from_fn(n, 2, |_, _| normal(&mut rng));
        let x = DMatrix::from_fn(n, 2, |i, j| {
            if j == 0 {
                x[(i, 0)]
            } else {
                rho * x[(i, 0)] + x[(i, 1)]
            }
        });
        let (b1, b2) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let y: Vec<f64> = (0..n)
            .map(|i| b1 * x[(i, 0)] + b2 * x[(i, 1)] + 0.5 * normal(&mut rng))
            .collect();
        let z = standardized_rows(&x);
        let ym = y.iter().sum::<f64>() / n as f64;
        let nf = n as f64;
        let g = |a: usize, b: usize| z.iter().map(|r| r[a] * r[b]).sum::<f64>() / nf;
        let c = |a: usize| z.iter().zip(&y).map(|(r, v)| r[a] * (v - ym)).sum::<f64>() / nf;
        let (g00, g01, g11, c0, c1) = (g(0, 0), g(0, 1), g(1, 1), c(0), c(1));
        for &alpha in &grid.alpha {
            for &lambda in &grid.lambda {
                let out = fit_elastic_net(&x, &y, &ElasticNetParams::new(alpha, lambda))
                    .map_err(|e| e.to_string())?;
                check_trace(&out.objective_trace)?;
                fits += 1;
                let beta = out.model.coefficients().ok_or("not linear")?.to_vec();
                let quad = |u: f64, v: f64| {
                    0.5 * (g00 * u * u + 2.0 * g01 * u * v + g11 * v * v) - c0 * u - c1 * v
                        + alpha
                            * (lambda * (u.abs() + v.abs())
                                + 0.5 * (1.0 - lambda) * (u * u + v * v))
                };
                let (_, u, v) = common::grid_minimize_2d(quad, 5.0);
                let ours = common::enet_objective(&z, &y, &beta, alpha, lambda);
                let oracle = common::enet_objective(&z, &y, &[u, v], alpha, lambda);
                worst_gap = worst_gap.max(ours - oracle);
            }
        }
    }
    ensure(worst_gap <= 1e-3, || {
        format!("objective exceeds oracle by {worst_gap:e}")
    })?;

    let mut worst_ridge: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = 40;
        let x = DMatrix::from_fn(n, 2, |_, _| normal(&mut rng));
        let y: Vec<f64> = (0..n)
            .map(|i| x[(i, 0)] - 0.5 * x[(i, 1)] + normal(&mut rng))
            .collect();
        let zr = standardized_rows(&x);
        let z = DMatrix::from_row_iterator(n, 2, zr.into_iter().flatten());
        let ym = y.iter().sum::<f64>() / n as f64;
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
        for &alpha in &grid.alpha {
            let mut params = ElasticNetParams::new(alpha, 0.0);
            params.tol = 1e-12;
            let out = fit_elastic_net(&x, &y, &params).map_err(|e| e.to_string())?;
            check_trace(&out.objective_trace)?;
            let a = z.tr_mul(&z) + DMatrix::identity(2, 2) * (n as f64 * alpha);
            let want = a
                .cholesky()
                .ok_or("singular ridge system")?
                .solve(&z.tr_mul(&yc));
            for (got, w) in out.model.coefficients().unwrap().iter().zip(want.iter()) {
                worst_ridge = worst_ridge.max((got - w).abs());
            }
        }
    }
    ensure(worst_ridge <= 1e-6, || {
        format!("ridge differs from closed form by {worst_ridge:e}")
    })?;
    Ok(format!(
        "{fits} fits, max objective gap {worst_gap:.1e}, max ridge error {worst_ridge:.1e}, all traces non-increasing"
    ))
}

fn svr_kkt_residual(
    x: &DMatrix<f64>,
    y: &[f64],
    model: &expressiveness::models::TrainedModel,
    eps: f64,
) -> Result<f64, String> {
    let ModelParams::Svr {
        c,
        dual_coefficients,
        support_indices,
        ..
    } = &model.params
    else {
        return Err("not an SVR".into());
    };
    let mut beta = vec![0.0; y.len()];
    for (&i, &b) in support_indices.iter().zip(dual_coefficients) {
        if b.abs() > *c * (1.0 + 1e-12) {
            return Err(format!("dual coefficient {b} outside [-{c}, {c}]"));
        }
        beta[i] = b;
    }
    let sum: f64 = beta.iter().sum();
    if sum.abs() > 1e-9 * c.max(1.0) {
        return Err(format!("dual coefficients sum to {sum:e}"));
    }
    let f = model.predict(x).map_err(|e| e.to_string())?;
    let at_bound = |b: f64| b.abs() >= c * (1.0 - 1e-12);
    let mut worst: f64 = 0.0;
    for i in 0..y.len() {
        let r = y[i] - f[i];
        let b = beta[i];
        let v = if b == 0.0 {
            (r.abs() - eps).max(0.0)
        } else if b > 0.0 && at_bound(b) {
            (eps - r).max(0.0)
        } else if b > 0.0 {
            (r - eps).abs()
        } else if at_bound(b) {
            (r + eps).max(0.0)
        } else {
            (r + eps).abs()
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

fn ac4_svr_oracle() -> Outcome {
    let cs = [0.5, 1.0, 2.0, 4.0, 8.0];
    let gammas = [0.1, 0.5, 1.0, 2.0];
    let (mut worst_obj, mut worst_pred, mut worst_kkt): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for d in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + d);
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)])
            .collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|r| r[0].sin() + 0.5 * r[1] + rng.random_range(-0.3..0.3))
            .collect();
        let x = DMatrix::from_row_iterator(5, 2, xs.iter().flatten().copied());
        let (c, gamma) = (cs[d as usize % 5], gammas[d as usize % 4]);
        let params = SvrParams::new(c, gamma);
        let out = fit_svr(&x, &y, &params).map_err(|e| e.to_string())?;
        let oracle = common::svr_dual_oracle(&xs, &y, c, gamma, params.epsilon);
        worst_obj = worst_obj.max((out.objective_trace[0] - oracle.objective).abs());
        let pred = out.model.predict(&x).map_err(|e| e.to_string())?;
        for (i, p) in pred.iter().enumerate() {
            worst_pred = worst_pred.max((p - oracle.predict(&oracle.z[i])).abs());
        }
        let kkt = svr_kkt_residual(&x, &y, &out.model, params.epsilon)?;
        ensure(kkt < params.tol, || {
            format!("dataset {d}: KKT residual {kkt:e} >= tol {:e}", params.tol)
        })?;
        worst_kkt = worst_kkt.max(kkt);
    }
    let detail = format!(
        "max |dual objective diff| {worst_obj:.1e}, max |prediction diff| {worst_pred:.1e}, max KKT residual {worst_kkt:.1e}"
    );
    ensure(worst_obj <= 1e-4 && worst_pred <= 1e-3, || detail.clone())?;
    Ok(detail)
}

/// Loss written from its definition: half mean squared error plus
/// `l2 / (2m)` times the squared weights, biases unpenalized.
fn mlp_loss(net: &Network, x: &DMatrix<f64>, y: &[f64], l2: f64) -> f64 {
    let m = y.len() as f64;
    let sse: f64 = net
        .forward(x)
        .iter()
        .zip(y)
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    let ww: f64 = net
        .layers
        .iter()
        .flat_map(|l| &l.weights)
        .map(|w| w * w)
        .sum();
    sse / (2.0 * m) + l2 * ww / (2.0 * m)
}

fn ac5_mlp_gradient() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut n_checked = 0;
    for t in 0..20u64 {
        let depth = 1 + (t % 2) as usize;
        let width = if (t / 2) % 2 == 0 { 64 } else { 128 };
        let n_in = 3;
        let m = 4;
        let x = DMatrix::from_fn(m, n_in, |_, _| normal(&mut rng));
        let y: Vec<f64> = (0..m).map(|_| normal(&mut rng)).collect();
        let l2 = rng.random_range(0.0..1.0);
        let net = Network::init(n_in, &vec![width; depth], 1000 + t);
        let (_, grad) = net.loss_and_gradient(&x, &y, l2);
        let theta = net.parameters();
        let mut probe = net.clone();
        let h = 1e-3;
        let mut at = |th: &mut Vec<f64>, k: usize, offset: f64| {
            th[k] = theta[k] + offset;
            probe.set_parameters(th);
            mlp_loss(&probe, &x, &y, l2)
        };
        let mut th = theta.clone();
        for k in 0..theta.len() {
            // fourth-order central difference
            let fd = (-at(&mut th, k, 2.0 * h) + 8.0 * at(&mut th, k, h)
                - 8.0 * at(&mut th, k, -h)
                + at(&mut th, k, -2.0 * h))
                / (12.0 * h);
            th[k] = theta[k];
            let rel = (fd - grad[k]).abs() / (fd.abs() + grad[k].abs()).max(1e-7);
            if rel > worst {
                worst = rel;
                worst_at = format!(
                    "network {t}, parameter {k}: analytic {:e}, numeric {fd:e}",
                    grad[k]
                );
            }
            n_checked += 1;
        }
    }
    ensure(worst < 1e-5, || {
        format!("max relative gradient error {worst:e} at {worst_at}")
    })?;
    Ok(format!(
        "20 networks, {n_checked} parameters, max relative error {worst:.1e}"
    ))
}

fn ac6_kinematics() -> Outcome {
    let k = kinematics(&[[3.5]; 8], 6.0).map_err(|e| e.to_string())?;
    ensure(
        (k.displacement, k.velocity, k.acceleration) == (0.0, 0.0, 0.0),
        || format!("constant series gave {k:?}"),
    )?;
    let linear: Vec<[f64; 1]> = (0..10).map(|i| [i as f64]).collect();
    let k = kinematics(&linear, 6.0).map_err(|e| e.to_string())?;
    ensure(
        (k.displacement, k.velocity, k.acceleration) == (1.0, 6.0, 0.0),
        || format!("linear series gave {k:?}"),
    )?;
    let k = kinematics(&[[0.0], [1.0], [3.0], [6.0]], 6.0).map_err(|e| e.to_string())?;
    ensure(
        (k.displacement, k.velocity, k.acceleration) == (2.0, 12.0, 36.0),
        || format!("[0,1,3,6] gave {k:?}"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let reference: Vec<[f64; 2]> = (0..68)
        .map(|_| {
            [
                rng.random_range(100.0..300.0),
                rng.random_range(100.0..300.0),
            ]
        })
        .collect();
    let (s, tx, ty) = (1.37, 12.5, -40.25);
    let warped: Vec<[f64; 2]> = reference
        .iter()
        .map(|p| [s * p[0] + tx, s * p[1] + ty])
        .collect();
    let (a, t) = fit_affine(&reference, &warped).ok_or("degenerate configuration")?;
    let err = (a[(0, 0)] - s)
        .abs()
        .max((a[(1, 1)] - s).abs())
        .max(a[(0, 1)].abs())
        .max(a[(1, 0)].abs())
        .max((t[0] - tx).abs())
        .max((t[1] - ty).abs());
    ensure(err < 1e-8, || {
        format!("planted warp recovered with error {err:e}")
    })?;
    let track = IntervalTrack {
        channels: AuChannels::default(),
        intervals: vec![Record {
            timestamp: 0.0,
            success: 1.0,
            landmarks: warped,
            translation: [0.0; 3],
            rotation: [0.0; 3],
            gaze: [0.0; 2],
            au_occurrence: vec![],
            au_intensity: vec![],
        }],
    };
    let aligned = align_landmarks(&track, &reference).map_err(|e| e.to_string())?;
    let back = aligned.intervals[0]
        .landmarks
        .iter()
        .zip(&reference)
        .map(|(p, q)| (p[0] - q[0]).abs().max((p[1] - q[1]).abs()))
        .fold(0.0, f64::max);
    ensure(back < 1e-8, || format!("aligned landmarks off by {back:e}"))?;
    Ok(format!(
        "analytic cases exact, warp error {err:.1e}, alignment error {back:.1e}"
    ))
}

fn small_grid() -> HyperParamGrid {
    let mut template = MlpParams::new(vec![8], 1e-3);
    template.max_epochs = 30;
    HyperParamGrid {
        svr: SvrGrid {
            c: vec![0.5, 2.0, 8.0],
            gamma: vec![0.03125, 0.25],
            epsilon: 0.1,
        },
        mlp: MlpGrid {
            layers: vec![1, 2],
            units: vec![8],
            l2_alpha: vec![0.01, 1.0],
            template,
        },
        ..HyperParamGrid::default()
    }
}

fn ac7_harness() -> Outcome {
    let mut checked = 0;
    for seed in 0..1000u64 {
        let ds = generate_synthetic(&SynthConfig::default(), seed)
            .map_err(|e| e.to_string())?
            .dataset;
        let labels = &ds.labels.values;
        let gids = ds.groups.group_ids();
        let f = make_folds(labels, &ds.groups, 8, 7, seed).map_err(|e| e.to_string())?;
        let outer: Vec<Option<usize>> = f.outer.iter().map(|&o| Some(o)).collect();
        if let Some(v) = common::fold_split_violation(labels, gids, &outer, 8) {
            return Err(format!("seed {seed}, outer folds: {v}"));
        }
        for o in 0..8 {
            if let Some(v) = common::fold_split_violation(labels, gids, &f.inner[o], 7) {
                return Err(format!("seed {seed}, inner folds of outer {o}: {v}"));
            }
        }
        checked += 1;
    }

    let ds = generate_synthetic(&SynthConfig::default(), 7)
        .map_err(|e| e.to_string())?
        .dataset;
    let run = |algorithm, grid: &HyperParamGrid, n_reps, jobs| {
        let options = CvOptions {
            n_reps,
            seed: 77,
            jobs,
            ..CvOptions::default()
        };
        nested_cv(
            &ds,
            algorithm,
            ModalitySelection::Multimodal,
            grid,
            &options,
        )
        .map_err(|e| e.to_string())
    };
    let defaults = HyperParamGrid::default();
    let base = run(Algorithm::ElasticNet, &defaults, 20, 1)?;
    ensure(base.len() == 160, || {
        format!("{} records at defaults", base.len())
    })?;
    for jobs in [2, 8, 0] {
        ensure(
            run(Algorithm::ElasticNet, &defaults, 20, jobs)? == base,
            || format!("elastic net records differ with jobs = {jobs}"),
        )?;
    }
    let small = small_grid();
    for algorithm in [Algorithm::Svr, Algorithm::Mlp] {
        let a = run(algorithm, &small, 2, 1)?;
        for jobs in [3, 0] {
            ensure(run(algorithm, &small, 2, jobs)? == a, || {
                format!("{algorithm} records differ with jobs = {jobs}")
            })?;
        }
    }
    Ok(format!(
        "{checked} fold assignments valid, 160 records, reruns bit-identical across thread counts"
    ))
}

fn run_cell(ds: &Dataset, modality: ModalitySelection) -> Result<Vec<EvaluationRecord>, String> {
    let options = CvOptions {
        seed: 8,
        jobs: 1,
        ..CvOptions::default()
    };
    nested_cv(
        ds,
        Algorithm::ElasticNet,
        modality,
        &HyperParamGrid::default(),
        &options,
    )
    .map_err(|e| e.to_string())
}

fn ac8_planted_signal() -> Outcome {
    let start = Instant::now();
    let config = SynthConfig::default();
    let ds = generate_synthetic(&config, 2024)
        .map_err(|e| e.to_string())?
        .dataset;
    let med_r =
        |recs: &[EvaluationRecord]| median(&recs.iter().filter_map(|r| r.r).collect::<Vec<_>>());
    let multi = run_cell(&ds, ModalitySelection::Multimodal)?;
    let visual = run_cell(&ds, ModalitySelection::Visual)?;
    let linguistic = run_cell(&ds, ModalitySelection::Linguistic)?;
    let elapsed = start.elapsed();
    let (m, v, l) = (med_r(&multi), med_r(&visual), med_r(&linguistic));
    let summary = coefficient_summary(&multi).map_err(|e| e.to_string())?;
    let top = summary[0].feature.clone();
    let detail = format!(
        "median r multimodal {m:.3}, visual {v:.3}, linguistic {l:.3}; top coefficient {top} ({:.3}); {:.1} s",
        summary[0].median,
        elapsed.as_secs_f64()
    );
    ensure(m >= v && m >= l, || detail.clone())?;
    ensure(top == "linguistic:Word Count", || detail.clone())?;
    within(elapsed, 300, "single-threaded planted-signal run")?;
    Ok(detail)
}

fn ac9_bootstrap() -> Outcome {
    let ds = generate_synthetic(&SynthConfig::default(), 9)
        .map_err(|e| e.to_string())?
        .dataset;
    let options = CvOptions {
        seed: 9,
        ..CvOptions::default()
    };
    let records = nested_cv(
        &ds,
        Algorithm::ElasticNet,
        ModalitySelection::Multimodal,
        &HyperParamGrid::default(),
        &options,
    )
    .map_err(|e| e.to_string())?;
    for metric in [Metric::Rmse, Metric::R2, Metric::R] {
        let c = bootstrap_compare(&records, &records, metric, "self", 2000, 1)
            .map_err(|e| e.to_string())?;
        ensure(c.delta == 0.0 && c.p_value == 1.0, || {
            format!("self comparison on {metric}: {c:?}")
        })?;
    }
    let shifted: Vec<EvaluationRecord> = records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.rmse += 0.125;
            r
        })
        .collect();
    let c = bootstrap_compare(&shifted, &records, Metric::Rmse, "shift", 2000, 1)
        .map_err(|e| e.to_string())?;
    let d = (c.delta, c.ci_low, c.ci_high);
    ensure(
        (d.0 - 0.125).abs() < 1e-12 && d.1 == d.0 && d.2 == d.0 && c.p_value == 1.0 / 2000.0,
        || format!("constant difference: {c:?}"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let diffs: Vec<f64> = (0..160).map(|_| normal(&mut rng) * 0.1 + 0.02).collect();
    let ours = resample_medians(&diffs, 2000, 31);
    let (lo, hi, theirs) = common::bootstrap_median_oracle(&diffs, 2000, 31);
    ensure(ours == theirs, || {
        "resampled medians differ from the oracle".into()
    })?;
    let s = bootstrap_median(&diffs, 2000, 31).map_err(|e| e.to_string())?;
    ensure(s.ci_low == lo && s.ci_high == hi, || {
        format!(
            "interval ({}, {}) vs oracle ({lo}, {hi})",
            s.ci_low, s.ci_high
        )
    })?;
    Ok("self comparison null, constant shift degenerate with p = 1/2000, resampler matches oracle exactly".into())
}

fn ac10_metrics() -> Outcome {
    let mut passes = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + trial);
        let raw: Vec<f64> = (0..1000).map(|_| normal(&mut rng)).collect();
        let y = zscore(&raw).map_err(|e| e.to_string())?;
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let m = metrics(&y, &vec![mean; y.len()]).map_err(|e| e.to_string())?;
        ensure(m.r2 == 0.0, || {
            format!("trial {trial}: in-sample r2 = {:e}", m.r2)
        })?;
        let (train, test) = y.split_at(500);
        let train_mean = train.iter().sum::<f64>() / train.len() as f64;
        let held = metrics(test, &vec![train_mean; test.len()]).map_err(|e| e.to_string())?;
        if (held.rmse - 1.0).abs() <= 0.1 {
            passes += 1;
        }
    }
    ensure(passes >= 95, || {
        format!("held-out RMSE within 0.1 of 1 in {passes}/100 trials")
    })?;
    Ok(format!(
        "in-sample r2 exactly 0 in 100/100, held-out RMSE within 0.1 of 1 in {passes}/100"
    ))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("AC1 ICC oracle equivalence", ac1_icc_oracle),
        ("AC2 CFA recovery", ac2_cfa_recovery),
        ("AC3 Elastic Net oracle equivalence", ac3_elastic_net_oracle),
        ("AC4 SVR oracle equivalence", ac4_svr_oracle),
        ("AC5 MLP gradient check", ac5_mlp_gradient),
        ("AC6 kinematics analytic suite", ac6_kinematics),
        ("AC7 harness structure", ac7_harness),
        ("AC8 planted-signal end to end", ac8_planted_signal),
        ("AC9 bootstrap sanity", ac9_bootstrap),
        ("AC10 metrics contract", ac10_metrics),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.2} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.2} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
