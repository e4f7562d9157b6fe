//! Data-reduction harness: rerun decoding and prediction with fewer matrix
//! sentences or a shorter story, one axis at a time.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{evaluate, EvaluationReport};
use crate::decoding::{run_grid, DecoderType, GridOptions, NtTable};
use crate::features::{assemble_cohort, VectorLayout};
use crate::srtmodel::{NestedCvPlan, SigmaGrid, SvrHyper};
use crate::synth::{Cohort, SubjectId};
use crate::{Error, Result};

/// Story length the minute grid refers to. Shorter cohort stories are
/// scaled proportionally.
pub const FULL_STORY_MINUTES: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMode {
    Sentences,
    StoryMinutes,
}

impl ReductionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReductionMode::Sentences => "sentences",
            ReductionMode::StoryMinutes => "story_minutes",
        }
    }
}

impl fmt::Display for ReductionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderSet {
    Full,
    SsOnly,
    SiOnly,
}

impl DecoderSet {
    pub const ALL: [DecoderSet; 3] = [DecoderSet::Full, DecoderSet::SsOnly, DecoderSet::SiOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            DecoderSet::Full => "full",
            DecoderSet::SsOnly => "ss_only",
            DecoderSet::SiOnly => "si_only",
        }
    }

    pub fn layout(self, base: &VectorLayout) -> Result<VectorLayout> {
        match self {
            DecoderSet::Full => Ok(base.clone()),
            DecoderSet::SsOnly => base.only(DecoderType::SubjectSpecific),
            DecoderSet::SiOnly => base.only(DecoderType::SubjectIndependent),
        }
    }
}

impl fmt::Display for DecoderSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sentences `{40, 35, …, 5}` or story minutes `{15, 12, 9, 6, 3}`.
pub fn standard_sweep_values(mode: ReductionMode) -> Vec<usize> {
    match mode {
        ReductionMode::Sentences => (1..=8).rev().map(|k| 5 * k).collect(),
        ReductionMode::StoryMinutes => (1..=5).rev().map(|k| 3 * k).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct ReductionOptions {
    /// Ridge and filter settings; the reduction fields are set per cell.
    pub grid: GridOptions,
    pub sigma_grid: SigmaGrid,
    pub hyper: SvrHyper,
    /// Overrides the sweep values of the mode.
    pub values: Option<Vec<usize>>,
    pub decoder_sets: Vec<DecoderSet>,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        Self {
            grid: GridOptions::default(),
            sigma_grid: SigmaGrid::default(),
            hyper: SvrHyper::default(),
            values: None,
            decoder_sets: DecoderSet::ALL.to_vec(),
        }
    }
}

/// One cell; the seed and the reduction fields fully determine it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionCell {
    pub mode: ReductionMode,
    pub value: usize,
    pub decoder_set: DecoderSet,
    pub master_seed: u64,
    pub n_sentences: Option<usize>,
    pub story_samples: Option<usize>,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionGrid {
    pub mode: ReductionMode,
    pub values: Vec<usize>,
    pub cells: Vec<ReductionCell>,
}

impl ReductionGrid {
    pub fn cell(&self, value: usize, set: DecoderSet) -> Option<&ReductionCell> {
        self.cells.iter().find(|c| c.value == value && c.decoder_set == set)
    }

    /// Correlations of one decoder set in sweep order.
    pub fn r_series(&self, set: DecoderSet) -> Vec<f64> {
        self.values
            .iter()
            .filter_map(|v| self.cell(*v, set).map(|c| c.report.pearson_r))
            .collect()
    }
}

fn story_samples(cohort: &Cohort, minutes: usize) -> usize {
    let full = cohort.stimuli.story_envelope.len() as f64;
    let story_minutes = full / cohort.stimuli.story_envelope.rate() / 60.0;
    let fraction = minutes as f64 / FULL_STORY_MINUTES.max(story_minutes);
    (fraction * full).round() as usize
}

/// Evaluates every decoder set on an NT table of the cohort.
pub(crate) fn evaluate_sets(
    table: &NtTable,
    cohort: &Cohort,
    base: &VectorLayout,
    sets: &[DecoderSet],
    sigma_grid: &SigmaGrid,
    hyper: &SvrHyper,
) -> Result<Vec<(DecoderSet, EvaluationReport)>> {
    let ids: Vec<SubjectId> = cohort.subjects.iter().map(|s| s.subject_id).collect();
    let srts = cohort.true_srts();
    let full = assemble_cohort(table, &ids, base)?;
    sets.iter()
        .map(|&set| {
            let layout = set.layout(base)?;
            let vectors = full.iter().map(|v| v.select(base, &layout)).collect::<Result<Vec<_>>>()?;
            let res = NestedCvPlan::new(&vectors, sigma_grid)?.run(&srts, hyper)?;
            Ok((set, evaluate(&srts, &res.predictions())?))
        })
        .collect()
}

pub fn data_reduction_sweep(cohort: &Cohort, mode: ReductionMode, opts: &ReductionOptions) -> Result<ReductionGrid> {
    let values = opts.values.clone().unwrap_or_else(|| standard_sweep_values(mode));
    if values.is_empty() || opts.decoder_sets.is_empty() {
        return Err(Error::config("a reduction sweep needs values and decoder sets"));
    }
    match mode {
        ReductionMode::Sentences => {
            if let Some(v) = values.iter().find(|&&v| v < 2) {
                return Err(Error::config(format!("sentence count {v} is below the minimum of 2")));
            }
            let have = cohort.stimuli.boundaries.len();
            if let Some(v) = values.iter().find(|&&v| v > have) {
                return Err(Error::config(format!("sweep asks for {v} sentences but the cohort has {have}")));
            }
        }
        ReductionMode::StoryMinutes => {
            if values.contains(&0) {
                return Err(Error::config("story minutes must be positive"));
            }
        }
    }
    let base = VectorLayout::full().restrict(|c| opts.grid.filter.accepts(c))?;
    let mut cells = Vec::with_capacity(values.len() * opts.decoder_sets.len());
    for &value in &values {
        let mut grid = opts.grid.clone();
        match mode {
            ReductionMode::Sentences => grid.n_sentences = Some(value),
            ReductionMode::StoryMinutes => grid.story_samples = Some(story_samples(cohort, value)),
        }
        let table = run_grid(cohort, &grid).map_err(|e| e.context(&format!("{mode} = {value}")))?;
        for (set, report) in evaluate_sets(&table, cohort, &base, &opts.decoder_sets, &opts.sigma_grid, &opts.hyper)
            .map_err(|e| e.context(&format!("{mode} = {value}")))?
        {
            cells.push(ReductionCell {
                mode,
                value,
                decoder_set: set,
                master_seed: cohort.master_seed,
                n_sentences: grid.n_sentences,
                story_samples: grid.story_samples,
                report,
            });
        }
    }
    Ok(ReductionGrid { mode, values, cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_grids() {
        assert_eq!(standard_sweep_values(ReductionMode::Sentences), vec![40, 35, 30, 25, 20, 15, 10, 5]);
        assert_eq!(standard_sweep_values(ReductionMode::StoryMinutes), vec![15, 12, 9, 6, 3]);
    }
}
