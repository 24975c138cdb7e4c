use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cerebra_core::ensemble::DEFAULT_ALPHA;
use cerebra_core::matching::DEFAULT_SWEEP_STEP;
use cerebra_core::measures::Approach;
use cerebra_core::network::NetworkConfig;
use cerebra_core::survey::{
    DEFAULT_MIN_SSA, DEFAULT_TOTAL_SLOTS, SENTENCES_PER_QUESTIONNAIRE,
};
use cerebra_core::synthesis::{BoostTargets, CorpusShape};
use serde::{Deserialize, Serialize};

/// Input file overrides. Unset paths resolve inside the output directory,
/// where `gen-data` writes them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub lexicon: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub fmri_dir: Option<PathBuf>,
    /// Stimulus list with hand-set multiplicities; replaces selection.
    pub stimuli: Option<PathBuf>,
    /// Collected responses; without it `ingest` simulates raters from the
    /// generator truth.
    pub responses: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub voxel_dim: usize,
    pub noise: f64,
    pub latent_dim: usize,
    pub nonlinear: bool,
    pub boost_targets: BoostTargets,
    pub boosts_per_target: usize,
    pub boost_min: f64,
    pub boost_max: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            voxel_dim: 200,
            noise: 0.05,
            latent_dim: 16,
            nonlinear: false,
            boost_targets: BoostTargets::EveryToken,
            boosts_per_target: 10,
            boost_min: 0.3,
            boost_max: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    /// Seed for data generation, survey dealing, simulated raters and the
    /// chance baseline. Network runs use `network.seed` onwards.
    pub seed: u64,
    pub subjects: usize,
    pub repetitions: usize,
    pub alpha: f64,
    pub approach: Approach,
    pub consensus_k: usize,
    pub raters: usize,
    pub sweep_step: f64,
    pub min_ssa: usize,
    pub total_slots: usize,
    pub per_questionnaire: usize,
    /// Probability that a simulated rater gives the reference answer.
    pub rater_accuracy: f64,
    pub chance: bool,
    pub paths: Paths,
    pub network: NetworkConfig,
    pub corpus: CorpusShape,
    pub generator: GeneratorConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("cerebra-out"),
            seed: 1,
            subjects: 8,
            repetitions: 20,
            alpha: DEFAULT_ALPHA,
            approach: Approach::AcrossContexts,
            consensus_k: 3,
            raters: 4,
            sweep_step: DEFAULT_SWEEP_STEP,
            min_ssa: DEFAULT_MIN_SSA,
            total_slots: DEFAULT_TOTAL_SLOTS,
            per_questionnaire: SENTENCES_PER_QUESTIONNAIRE,
            rater_accuracy: 0.6,
            chance: true,
            paths: Paths::default(),
            network: NetworkConfig::default(),
            corpus: CorpusShape::default(),
            generator: GeneratorConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 2 {
            bail!("repetitions must be at least 2");
        }
        if self.subjects < 1 {
            bail!("subjects must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must be in (0, 1)");
        }
        if self.consensus_k == 0 || 2 * self.consensus_k <= self.raters || self.consensus_k > self.raters {
            bail!("consensus needs raters / 2 < consensus_k <= raters");
        }
        if !(0.0..=1.0).contains(&self.rater_accuracy) {
            bail!("rater_accuracy must be in [0, 1]");
        }
        self.network.validate()?;
        Ok(())
    }

    fn input(&self, path: &Option<PathBuf>, default: &str) -> PathBuf {
        path.clone().unwrap_or_else(|| self.out_dir.join(default))
    }

    pub fn lexicon_path(&self) -> PathBuf {
        self.input(&self.paths.lexicon, "lexicon.csv")
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.input(&self.paths.corpus, "corpus.jsonl")
    }

    pub fn catalog_path(&self) -> PathBuf {
        self.input(&self.paths.catalog, "catalog.csv")
    }

    pub fn fmri_dir(&self) -> PathBuf {
        self.input(&self.paths.fmri_dir, "fmri")
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}
