//! JSON run configuration. Every field is optional; command-line flags
//! override the file. Relative paths resolve against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use expressiveness::evaluation::{HyperParamGrid, Metric, DEFAULT_RESAMPLES};
use expressiveness::latent::Priors;
use expressiveness::models::Algorithm;
use expressiveness::synth::SynthConfig;
use expressiveness::ModalitySelection;
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub reliability: ReliabilitySection,
    pub cfa: CfaSection,
    pub features_visual: VisualSection,
    pub features_linguistic: LinguisticSection,
    pub evaluate: EvaluateSection,
    pub compare: CompareSection,
    pub coefficients: CoefficientsSection,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReliabilitySection {
    pub ratings: Option<PathBuf>,
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfaSection {
    pub ratings: Option<PathBuf>,
    pub indicators: Option<PathBuf>,
    pub traits: Option<PathBuf>,
    pub chains: Option<usize>,
    pub warmup: Option<usize>,
    pub kept: Option<usize>,
    pub priors: Option<Priors>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisualSection {
    pub tracks: Vec<PathBuf>,
    pub window: Option<usize>,
    pub exclude_failed_frames: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinguisticSection {
    pub transcripts: Option<PathBuf>,
    pub texts: Vec<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub external: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub manifest: Option<PathBuf>,
    pub algorithms: Vec<Algorithm>,
    pub modalities: Vec<ModalitySelection>,
    pub n_reps: Option<usize>,
    pub k_outer: Option<usize>,
    pub k_inner: Option<usize>,
    pub grid: HyperParamGrid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub records: Option<PathBuf>,
    pub algorithm: Algorithm,
    pub pairs: Vec<(ModalitySelection, ModalitySelection)>,
    pub metrics: Vec<Metric>,
    pub n_resamples: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            records: None,
            algorithm: Algorithm::ElasticNet,
            pairs: Vec::new(),
            metrics: Vec::new(),
            n_resamples: DEFAULT_RESAMPLES,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientsSection {
    pub records: Option<PathBuf>,
    pub modality: ModalitySelection,
}

impl Default for CoefficientsSection {
    fn default() -> Self {
        CoefficientsSection {
            records: None,
            modality: ModalitySelection::Multimodal,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, UsageError> {
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        config.rebase(&base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        fix(&mut self.reliability.ratings);
        fix(&mut self.cfa.ratings);
        fix(&mut self.cfa.indicators);
        fix(&mut self.cfa.traits);
        fix(&mut self.features_linguistic.transcripts);
        fix(&mut self.features_linguistic.lexicon);
        fix(&mut self.features_linguistic.external);
        fix(&mut self.evaluate.manifest);
        fix(&mut self.compare.records);
        fix(&mut self.coefficients.records);
        for p in self
            .features_visual
            .tracks
            .iter_mut()
            .chain(&mut self.features_linguistic.texts)
        {
            *p = base.join(&*p);
        }
    }
}
