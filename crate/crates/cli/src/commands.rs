//! Subcommand bodies. Each computes its artifacts into a staging directory
//! inside the output directory and moves them into place only on success.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context as _, Result};
use expressiveness::data::{read_traits_csv, write_feature_csv, write_labels_csv};
use expressiveness::evaluation::{
    coefficient_summary, compare_modalities, nested_cv, read_records_jsonl, select_records,
    write_coefficients_csv, write_comparison_json, write_evaluation, CvOptions, Metric,
    DEFAULT_PAIRS,
};
use expressiveness::latent::{
    external_validity, factor_scores, fit_cfa, fit_indices, sample_covariance, CfaConfig,
    Indicators, ParameterSummary, RHAT_THRESHOLD,
};
use expressiveness::linguistic::{
    extract_linguistic_features, load_lexicon, read_external_dimensions, read_transcript_text,
    read_transcripts_csv,
};
use expressiveness::models::Algorithm;
use expressiveness::reliability::{
    group_ratings, question_report_at, read_ratings_csv, DEFAULT_CONFIDENCE,
};
use expressiveness::synth::{generate_synthetic, write_synthetic};
use expressiveness::visual::{extract_visual_features, parse_track, WINDOW};
use expressiveness::{load_dataset, Error, ModalitySelection};
use log::info;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::{
    CfaArgs, CoefficientsArgs, CompareArgs, Context, EvaluateArgs, LinguisticArgs, ReliabilityArgs,
    SynthArgs, UsageError, VisualArgs,
};

/// Output staging for one command run.
struct Stage {
    out: PathBuf,
    dir: PathBuf,
}

impl Stage {
    fn new(out: &Path) -> Result<Stage> {
        fs::create_dir_all(out)
            .with_context(|| format!("cannot create output directory {}", out.display()))?;
        let dir = out.join(format!(".staging-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Stage {
            out: out.to_path_buf(),
            dir,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(self.path(name), text + "\n").with_context(|| format!("cannot write {name}"))
    }

    /// Adds `run.json` and moves every staged file into the output directory.
    fn commit(self, command: &str, ctx: &Context, seed: Option<u64>) -> Result<Vec<String>> {
        let mut artifacts: Vec<String> = fs::read_dir(&self.dir)?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<std::io::Result<_>>()?;
        artifacts.sort();
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let run = json!({
            "command": command,
            "seed": seed,
            "jobs": ctx.jobs,
            "artifacts": artifacts,
            "metadata": {
                "version": env!("CARGO_PKG_VERSION"),
                "timestamp_unix": timestamp,
            },
        });
        self.write_json("run.json", &run)?;
        artifacts.push("run.json".into());
        for name in &artifacts {
            let dest = self.out.join(name);
            if dest.is_dir() {
                fs::remove_dir_all(&dest)?;
            }
            fs::rename(self.dir.join(name), &dest)
                .with_context(|| format!("cannot move {name} into place"))?;
        }
        fs::remove_dir(&self.dir)?;
        info!(
            "{command}: wrote {} artifacts to {}",
            artifacts.len(),
            self.out.display()
        );
        Ok(artifacts)
    }
}

impl Drop for Stage {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

/// Flag value, then config value, else a usage error naming both.
fn required_path(flag: Option<PathBuf>, config: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    let p = flag.or_else(|| config.clone()).ok_or_else(|| {
        usage(format!(
            "missing {what}: pass --{what} or set it in the config"
        ))
    })?;
    existing(p)
}

fn existing(p: PathBuf) -> Result<PathBuf> {
    if p.exists() {
        Ok(p)
    } else {
        Err(usage(format!("no such file or directory: {}", p.display())))
    }
}

/// Core configuration errors are caller mistakes.
fn classify(e: Error) -> anyhow::Error {
    match e {
        Error::Config(m) => usage(m),
        e => e.into(),
    }
}

pub fn reliability(ctx: &Context, args: ReliabilityArgs) -> Result<()> {
    let c = &ctx.config.reliability;
    let ratings = required_path(args.ratings, &c.ratings, "ratings")?;
    let confidence = args
        .confidence
        .or(c.confidence)
        .unwrap_or(DEFAULT_CONFIDENCE);
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(usage(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let records = read_ratings_csv(&ratings)?;
    let reports = group_ratings(&records)?
        .iter()
        .map(|q| question_report_at(q, confidence))
        .collect::<expressiveness::Result<Vec<_>>>()?;
    let stage = Stage::new(&ctx.out)?;
    stage.write_json("reliability.json", &reports)?;
    stage.commit("reliability", ctx, None)?;
    Ok(())
}

/// Participant-by-question mean ratings, ordered as the first question lists them.
fn indicators_from_ratings(path: &Path) -> Result<Indicators> {
    let questions = group_ratings(&read_ratings_csv(path)?)?;
    let first = questions
        .first()
        .ok_or_else(|| Error::EmptyInput(format!("no ratings in {}", path.display())))?;
    let ids: Vec<String> = first
        .subject_means()
        .into_iter()
        .map(|(id, _)| id)
        .collect();
    let mut values = DMatrix::zeros(ids.len(), questions.len());
    for (j, q) in questions.iter().enumerate() {
        let means: HashMap<String, f64> = q.subject_means().into_iter().collect();
        if means.len() != ids.len() {
            return Err(Error::Invalid(format!(
                "question `{}` rates {} videos, `{}` rates {}",
                q.question_id,
                means.len(),
                first.question_id,
                ids.len()
            ))
            .into());
        }
        for (i, id) in ids.iter().enumerate() {
            values[(i, j)] = *means.get(id).ok_or_else(|| Error::MissingParticipant {
                id: id.clone(),
                source_name: format!("question `{}`", q.question_id),
            })?;
        }
    }
    let names = questions.iter().map(|q| q.question_id.clone()).collect();
    Ok(Indicators::new(ids, names, values)?)
}

#[derive(Serialize)]
struct PosteriorReport<'a> {
    converged: bool,
    max_rhat: f64,
    rhat_threshold: f64,
    n_chains: usize,
    n_warmup: usize,
    n_kept: usize,
    participants: usize,
    indicators: &'a [String],
    summaries: &'a [ParameterSummary],
}

pub fn cfa(ctx: &Context, args: CfaArgs) -> Result<()> {
    let seed = ctx.require_seed("cfa")?;
    let c = &ctx.config.cfa;
    let indicators = match (args.ratings, args.indicators) {
        (Some(r), _) => indicators_from_ratings(&existing(r)?)?,
        (None, Some(i)) => Indicators::read_csv(existing(i)?)?,
        (None, None) => match (&c.ratings, &c.indicators) {
            (Some(r), _) => indicators_from_ratings(&existing(r.clone())?)?,
            (None, Some(i)) => Indicators::read_csv(existing(i.clone())?)?,
            (None, None) => return Err(usage("missing input: pass --ratings or --indicators")),
        },
    };
    let traits = match args.traits.or_else(|| c.traits.clone()) {
        Some(p) => Some(read_traits_csv(existing(p)?)?),
        None => None,
    };
    let defaults = CfaConfig::default();
    let config = CfaConfig {
        n_chains: args.chains.or(c.chains).unwrap_or(defaults.n_chains),
        n_warmup: args.warmup.or(c.warmup).unwrap_or(defaults.n_warmup),
        n_kept: args.kept.or(c.kept).unwrap_or(defaults.n_kept),
        priors: c.priors.unwrap_or(defaults.priors),
        seed,
    };

    let posterior = fit_cfa(&indicators, &config).map_err(classify)?;
    let n = indicators.participant_ids.len();
    let indices = fit_indices(
        &posterior,
        &sample_covariance(&indicators.standardized()?),
        n,
    )?;
    let scores = factor_scores(&posterior)?;
    let validity = match &traits {
        Some(t) => Some(external_validity(&scores, t)?),
        None => None,
    };

    let stage = Stage::new(&ctx.out)?;
    stage.write_json(
        "cfa_posterior.json",
        &PosteriorReport {
            converged: posterior.converged,
            max_rhat: posterior.max_rhat,
            rhat_threshold: RHAT_THRESHOLD,
            n_chains: config.n_chains,
            n_warmup: config.n_warmup,
            n_kept: config.n_kept,
            participants: n,
            indicators: &posterior.indicator_names,
            summaries: &posterior.summaries,
        },
    )?;
    stage.write_json("fit_indices.json", &indices)?;
    write_labels_csv(&scores, "label", stage.path("factor_scores.csv"))?;
    if let Some(v) = &validity {
        stage.write_json("validity.json", v)?;
    }
    stage.commit("cfa", ctx, Some(seed))?;
    Ok(())
}

/// Files as given; directories expand to their `.csv` files in name order.
fn expand_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        let p = existing(p.clone())?;
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(&p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .filter(|f| {
                    f.is_file() && f.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv"))
                })
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p);
        }
    }
    Ok(out)
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| {
            usage(format!(
                "cannot take a participant id from {}",
                path.display()
            ))
        })
}

pub fn features_visual(ctx: &Context, args: VisualArgs) -> Result<()> {
    let c = &ctx.config.features_visual;
    let inputs = if args.tracks.is_empty() {
        &c.tracks
    } else {
        &args.tracks
    };
    if inputs.is_empty() {
        return Err(usage(
            "missing tracks: pass --tracks or set features_visual.tracks in the config",
        ));
    }
    let window = args.window.or(c.window).unwrap_or(WINDOW);
    if window == 0 {
        return Err(usage("window must be at least 1"));
    }
    let exclude = args.exclude_failed_frames || c.exclude_failed_frames;
    let files = expand_inputs(inputs)?;
    if files.is_empty() {
        return Err(usage("no track CSVs found"));
    }
    let tracks = files
        .iter()
        .map(|f| {
            let track = parse_track(f)?;
            let track = if exclude {
                track.without_failed()
            } else {
                track
            };
            Ok((stem(f)?, track))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = extract_visual_features(&tracks, window)?;
    let stage = Stage::new(&ctx.out)?;
    write_feature_csv(&table, stage.path("visual_features.csv"))?;
    stage.commit("features-visual", ctx, None)?;
    Ok(())
}

pub fn features_linguistic(ctx: &Context, args: LinguisticArgs) -> Result<()> {
    let c = &ctx.config.features_linguistic;
    let lexicon = load_lexicon(required_path(args.lexicon, &c.lexicon, "lexicon")?)?;
    let transcripts = match args.transcripts.or_else(|| c.transcripts.clone()) {
        Some(p) if args.texts.is_empty() => read_transcripts_csv(existing(p)?)?,
        _ => {
            let texts = if args.texts.is_empty() {
                &c.texts
            } else {
                &args.texts
            };
            if texts.is_empty() {
                return Err(usage("missing transcripts: pass --transcripts or --texts"));
            }
            texts
                .iter()
                .map(|p| {
                    let p = existing(p.clone())?;
                    Ok(read_transcript_text(&p, &stem(&p)?)?)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let external = match args.external.or_else(|| c.external.clone()) {
        Some(p) => Some(read_external_dimensions(existing(p)?)?),
        None => None,
    };
    let table = extract_linguistic_features(&transcripts, &lexicon, external.as_ref())?;
    let stage = Stage::new(&ctx.out)?;
    write_feature_csv(&table, stage.path("linguistic_features.csv"))?;
    stage.commit("features-linguistic", ctx, None)?;
    Ok(())
}

pub fn evaluate(ctx: &Context, args: EvaluateArgs) -> Result<()> {
    let seed = ctx.require_seed("evaluate")?;
    let c = &ctx.config.evaluate;
    let manifest = required_path(args.manifest, &c.manifest, "manifest")?;
    let algorithms = pick(args.algorithms, &c.algorithms, &Algorithm::ALL);
    let modalities = pick(args.modalities, &c.modalities, &ModalitySelection::ALL);
    let defaults = CvOptions::default();
    let options = CvOptions {
        n_reps: args.reps.or(c.n_reps).unwrap_or(defaults.n_reps),
        k_outer: args.k_outer.or(c.k_outer).unwrap_or(defaults.k_outer),
        k_inner: args.k_inner.or(c.k_inner).unwrap_or(defaults.k_inner),
        seed,
        jobs: ctx.jobs,
    };
    let dataset = load_dataset(&manifest)?;
    let mut records = Vec::new();
    for &algorithm in &algorithms {
        for &modality in &modalities {
            info!("evaluate: {algorithm} on {modality}");
            records.extend(
                nested_cv(&dataset, algorithm, modality, &c.grid, &options).map_err(classify)?,
            );
        }
    }
    let stage = Stage::new(&ctx.out)?;
    write_evaluation(&records, &stage.dir)?;
    stage.commit("evaluate", ctx, Some(seed))?;
    Ok(())
}

fn pick<T: Copy>(flag: Vec<T>, config: &[T], default: &[T]) -> Vec<T> {
    if !flag.is_empty() {
        flag
    } else if !config.is_empty() {
        config.to_vec()
    } else {
        default.to_vec()
    }
}

fn parse_pair(s: &str) -> Result<(ModalitySelection, ModalitySelection)> {
    let (a, b) = s.split_once('-').ok_or_else(|| {
        usage(format!(
            "modality pair `{s}` must look like `visual-multimodal`"
        ))
    })?;
    let parse = |m: &str| {
        m.trim()
            .parse::<ModalitySelection>()
            .map_err(|e| usage(format!("modality pair `{s}`: {e}")))
    };
    Ok((parse(a)?, parse(b)?))
}

pub fn compare(ctx: &Context, args: CompareArgs) -> Result<()> {
    let seed = ctx.require_seed("compare")?;
    let c = &ctx.config.compare;
    let records = read_records_jsonl(required_path(args.records, &c.records, "records")?)?;
    let algorithm = args.algorithm.unwrap_or(c.algorithm);
    let pairs = if !args.pairs.is_empty() {
        args.pairs
            .iter()
            .map(|s| parse_pair(s))
            .collect::<Result<Vec<_>>>()?
    } else if !c.pairs.is_empty() {
        c.pairs.clone()
    } else {
        DEFAULT_PAIRS.to_vec()
    };
    let metrics = pick(args.metrics, &c.metrics, &Metric::ALL);
    let n_resamples = args.resamples.unwrap_or(c.n_resamples);
    if n_resamples == 0 {
        return Err(usage("resamples must be at least 1"));
    }
    let results = compare_modalities(&records, algorithm, &pairs, &metrics, n_resamples, seed)?;
    let stage = Stage::new(&ctx.out)?;
    write_comparison_json(&results, stage.path("comparison.json"))?;
    stage.commit("compare", ctx, Some(seed))?;
    Ok(())
}

pub fn coefficients(ctx: &Context, args: CoefficientsArgs) -> Result<()> {
    let c = &ctx.config.coefficients;
    let records = read_records_jsonl(required_path(args.records, &c.records, "records")?)?;
    let modality = args.modality.unwrap_or(c.modality);
    let selected = select_records(&records, Algorithm::ElasticNet, modality);
    if selected.is_empty() {
        return Err(Error::EmptyInput(format!("no elastic_net records for {modality}")).into());
    }
    let summary = coefficient_summary(&selected)?;
    let stage = Stage::new(&ctx.out)?;
    write_coefficients_csv(&summary, stage.path("coefficients.csv"))?;
    stage.commit("coefficients", ctx, None)?;
    Ok(())
}

pub fn synth(ctx: &Context, args: SynthArgs) -> Result<()> {
    let seed = ctx.require_seed("synth")?;
    let mut config = ctx.config.synth.clone();
    if let Some(g) = args.groups {
        config.n_groups = g;
    }
    let synthetic = generate_synthetic(&config, seed).map_err(classify)?;
    let stage = Stage::new(&ctx.out)?;
    write_synthetic(&synthetic, &stage.dir)?;
    stage.commit("synth", ctx, Some(seed))?;
    Ok(())
}
