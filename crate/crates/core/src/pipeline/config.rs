use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binio::read_file;
use crate::decoding::{ConfigFilter, GridOptions, DEFAULT_LAMBDA_REL};
use crate::eval::{DecoderSet, ReductionMode, ReductionOptions, MIN_PERMUTATIONS};
use crate::srtmodel::{SigmaGrid, SvrHyper};
use crate::synth::CohortSpec;
use crate::{Error, Result};

/// Data-reduction settings. Missing value lists mean the standard grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionConfig {
    pub modes: Vec<ReductionMode>,
    pub sentences: Option<Vec<usize>>,
    pub story_minutes: Option<Vec<usize>>,
    pub decoder_sets: Vec<DecoderSet>,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            modes: vec![ReductionMode::Sentences, ReductionMode::StoryMinutes],
            sentences: None,
            story_minutes: None,
            decoder_sets: DecoderSet::ALL.to_vec(),
        }
    }
}

/// Everything a run depends on. Together with the code version it fixes
/// every artifact byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub cohort: CohortSpec,
    pub lambda_rel: f64,
    /// Candidates `{0.1, 0.2, …}` × SD; 10 gives multipliers up to 1.
    pub sigma_grid_size: usize,
    pub svr: SvrHyper,
    pub n_perm: usize,
    pub filter: ConfigFilter,
    pub reduction: ReductionConfig,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            cohort: CohortSpec::default(),
            lambda_rel: DEFAULT_LAMBDA_REL,
            sigma_grid_size: 10,
            svr: SvrHyper::default(),
            n_perm: 200,
            filter: ConfigFilter::default(),
            reduction: ReductionConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, what: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("{what}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::config(format!("{} is not UTF-8", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        self.cohort.validate()?;
        if !(self.lambda_rel > 0.0 && self.lambda_rel.is_finite()) {
            return Err(Error::config(format!("lambda_rel must be positive, got {}", self.lambda_rel)));
        }
        if !(1..=100).contains(&self.sigma_grid_size) {
            return Err(Error::config(format!(
                "sigma_grid_size must lie in 1..=100, got {}",
                self.sigma_grid_size
            )));
        }
        self.svr.validate().map_err(|e| e.context("svr"))?;
        if self.n_perm < MIN_PERMUTATIONS {
            return Err(Error::config(format!(
                "n_perm must be at least {MIN_PERMUTATIONS}, got {}",
                self.n_perm
            )));
        }
        self.filter.validate().map_err(|e| e.context("filter"))?;
        if self.reduction.modes.is_empty() || self.reduction.decoder_sets.is_empty() {
            return Err(Error::config("reduction.modes and reduction.decoder_sets must be non-empty"));
        }
        if let Some(v) = self.reduction.sentences.iter().flatten().find(|&&v| v < 2) {
            return Err(Error::config(format!("reduction.sentences: {v} is below the minimum of 2")));
        }
        if let Some(v) = self.reduction.sentences.iter().flatten().find(|&&v| v > self.cohort.n_sentences) {
            return Err(Error::config(format!(
                "reduction.sentences: {v} exceeds cohort.n_sentences = {}",
                self.cohort.n_sentences
            )));
        }
        if self.reduction.story_minutes.iter().flatten().any(|&v| v == 0) {
            return Err(Error::config("reduction.story_minutes must be positive"));
        }
        Ok(())
    }

    pub fn grid_options(&self) -> GridOptions {
        GridOptions {
            lambda_rel: self.lambda_rel,
            filter: self.filter.clone(),
            n_sentences: None,
            story_samples: None,
        }
    }

    pub fn sigma_grid(&self) -> Result<SigmaGrid> {
        SigmaGrid::tenths(self.sigma_grid_size)
    }

    pub fn reduction_options(&self, mode: ReductionMode) -> Result<ReductionOptions> {
        Ok(ReductionOptions {
            grid: self.grid_options(),
            sigma_grid: self.sigma_grid()?,
            hyper: self.svr,
            values: match mode {
                ReductionMode::Sentences => self.reduction.sentences.clone(),
                ReductionMode::StoryMinutes => self.reduction.story_minutes.clone(),
            },
            decoder_sets: self.reduction.decoder_sets.clone(),
        })
    }
}
