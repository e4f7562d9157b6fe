use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{
    generate_feature_stream, generate_sentence_stimulus, intelligibility_gain, simulate_eeg,
    EegRecording, FeatureKernels, FeatureKind, RecordingTag, SnrCondition, SubjectId, Task,
};
use crate::dsp::TimeSeries;
use crate::rng::{derive_seed, rng_for};
use crate::{Error, Result};

/// How per-subject response kernels are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelFamily {
    /// Every subject shares [`FeatureKernels::single_lag`] at `lag`.
    SingleLag { lag: usize },
    /// Shared population kernels plus an individual component of relative
    /// energy `individuality`.
    Population { individuality: f64 },
}

/// Parameters of a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n_subjects: usize,
    pub n_channels: usize,
    pub story_s: f64,
    pub n_sentences: usize,
    pub sentence_s: f64,
    pub gap_s: f64,
    pub noise_level: f64,
    pub slope_db: f64,
    pub srt_mean_db: f64,
    pub srt_sd_db: f64,
    pub kernels: KernelFamily,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_subjects: 12,
            n_channels: 16,
            story_s: 180.0,
            n_sentences: 40,
            sentence_s: 3.0,
            gap_s: 0.5,
            noise_level: 6.0,
            slope_db: 2.0,
            srt_mean_db: -9.07,
            srt_sd_db: 0.56,
            kernels: KernelFamily::Population { individuality: 0.5 },
        }
    }
}

impl CohortSpec {
    /// The noiseless single-lag cohort in which every decoder is exact.
    pub fn noiseless(n_subjects: usize) -> Self {
        Self {
            n_subjects,
            noise_level: 0.0,
            kernels: KernelFamily::SingleLag { lag: 3 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::config(format!("cohort.{field}: {msg}")));
        if self.n_subjects < 3 {
            return fail(
                "n_subjects",
                format!("leave-one-subject-out needs at least 3 subjects, got {}", self.n_subjects),
            );
        }
        if self.n_channels < 2 {
            return fail("n_channels", format!("need at least 2 channels, got {}", self.n_channels));
        }
        if !(self.story_s >= 10.0 && self.story_s <= 3600.0) {
            return fail("story_s", format!("must lie in [10, 3600] s, got {}", self.story_s));
        }
        if self.n_sentences < 2 {
            return fail("n_sentences", format!("need at least 2 sentences, got {}", self.n_sentences));
        }
        if !(self.sentence_s >= 1.0 && self.sentence_s <= 20.0) {
            return fail("sentence_s", format!("must lie in [1, 20] s, got {}", self.sentence_s));
        }
        if !(self.gap_s >= 0.5 && self.gap_s <= 10.0) {
            return fail("gap_s", format!("must lie in [0.5, 10] s, got {}", self.gap_s));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return fail("noise_level", format!("must be ≥ 0, got {}", self.noise_level));
        }
        if !(self.slope_db > 0.0 && self.slope_db.is_finite()) {
            return fail("slope_db", format!("must be > 0, got {}", self.slope_db));
        }
        if !(self.srt_sd_db >= 0.0 && self.srt_mean_db.is_finite() && self.srt_sd_db.is_finite()) {
            return fail("srt_sd_db", format!("must be ≥ 0, got {}", self.srt_sd_db));
        }
        match self.kernels {
            KernelFamily::SingleLag { lag } if lag >= super::MAX_KERNEL_LAGS => {
                fail("kernels.lag", format!("must be below {}", super::MAX_KERNEL_LAGS))
            }
            KernelFamily::Population { individuality } if !(individuality >= 0.0) => {
                fail("kernels.individuality", format!("must be ≥ 0, got {individuality}"))
            }
            _ => Ok(()),
        }
    }
}

/// Forward-model parameters of one synthetic subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSubjectSpec {
    pub n_channels: usize,
    pub true_srt_db: f64,
    pub psychometric_slope_db: f64,
    pub kernels: FeatureKernels,
    pub noise_level: f64,
    pub seed: u64,
}

impl SyntheticSubjectSpec {
    /// Forward-model gain for a recording: the psychometric value at the
    /// condition's SNR, or 1 for speech in quiet (story and silence).
    pub fn gain(&self, condition: Option<SnrCondition>) -> f64 {
        match condition.and_then(SnrCondition::db) {
            Some(db) => intelligibility_gain(db, self.true_srt_db, self.psychometric_slope_db),
            None => 1.0,
        }
    }
}

/// Stimulus features shared by the whole cohort, at 64 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimuli {
    pub story_envelope: TimeSeries,
    pub story_onsets: TimeSeries,
    pub matrix_envelope: TimeSeries,
    pub matrix_onsets: TimeSeries,
    /// `[start, end)` sample spans of the matrix sentences.
    pub boundaries: Vec<(usize, usize)>,
}

impl Stimuli {
    pub fn feature(&self, task: Task, kind: FeatureKind) -> &TimeSeries {
        match (task, kind) {
            (Task::Story, FeatureKind::Envelope) => &self.story_envelope,
            (Task::Story, FeatureKind::Onsets) => &self.story_onsets,
            (Task::Matrix, FeatureKind::Envelope) => &self.matrix_envelope,
            (Task::Matrix, FeatureKind::Onsets) => &self.matrix_onsets,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: SubjectId,
    pub spec: SyntheticSubjectSpec,
    pub story: EegRecording,
    pub matrix: BTreeMap<SnrCondition, EegRecording>,
}

impl SubjectRecord {
    pub fn true_srt_db(&self) -> f64 {
        self.spec.true_srt_db
    }

    /// The story recording (`condition = None`) or a matrix condition.
    pub fn recording(&self, task: Task, condition: Option<SnrCondition>) -> Result<&EegRecording> {
        match (task, condition) {
            (Task::Story, _) => Ok(&self.story),
            (Task::Matrix, Some(c)) => self.matrix.get(&c).ok_or_else(|| {
                Error::data(format!("subject {} has no matrix recording at {c} dB", self.subject_id))
            }),
            (Task::Matrix, None) => Err(Error::data("matrix recordings need an SNR condition")),
        }
    }

    pub fn validate(&self, stimuli: &Stimuli) -> Result<()> {
        for c in SnrCondition::ALL {
            let r = self.recording(Task::Matrix, Some(c))?;
            if r.n_samples() != stimuli.matrix_envelope.len() {
                return Err(Error::data(format!(
                    "subject {} matrix {c} recording length does not match the stimulus",
                    self.subject_id
                )));
            }
        }
        if self.matrix.len() != SnrCondition::ALL.len() {
            return Err(Error::data(format!("subject {} has extra matrix conditions", self.subject_id)));
        }
        if self.story.n_samples() != stimuli.story_envelope.len() {
            return Err(Error::data(format!(
                "subject {} story recording length does not match the stimulus",
                self.subject_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub spec: CohortSpec,
    pub master_seed: u64,
    pub stimuli: Stimuli,
    pub subjects: Vec<SubjectRecord>,
}

impl Cohort {
    pub fn validate(&self) -> Result<()> {
        let b = &self.stimuli.boundaries;
        if b.len() != self.spec.n_sentences {
            return Err(Error::data(format!(
                "{} sentence boundaries for {} sentences",
                b.len(),
                self.spec.n_sentences
            )));
        }
        let mut prev = 0;
        for &(s, e) in b {
            if s < prev || e <= s || e > self.stimuli.matrix_envelope.len() {
                return Err(Error::data("sentence boundaries overlap or are out of order"));
            }
            prev = e;
        }
        for s in &self.subjects {
            s.validate(&self.stimuli)?;
        }
        Ok(())
    }

    pub fn true_srts(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.true_srt_db()).collect()
    }
}

fn quantize(x: f64) -> f64 {
    x as f32 as f64
}

fn quantize_series(ts: TimeSeries) -> Result<TimeSeries> {
    let q = ts.samples().iter().map(|&v| quantize(v)).collect();
    ts.map_samples(q)
}

/// Generates a cohort deterministically from `master_seed`.
///
/// All stored values are rounded to float32 so that the on-disk cohort
/// format reproduces the in-memory cohort exactly.
pub fn generate_cohort(spec: &CohortSpec, master_seed: u64) -> Result<Cohort> {
    spec.validate()?;
    let story_seed = derive_seed(master_seed, "story-stimulus", &[]);
    let story_envelope =
        quantize_series(generate_feature_stream(FeatureKind::Envelope, spec.story_s, story_seed)?)?;
    let story_onsets = quantize_series(crate::dsp::acoustic_onsets(&story_envelope)?)?;
    let sentences = generate_sentence_stimulus(
        spec.n_sentences,
        spec.sentence_s,
        spec.gap_s,
        derive_seed(master_seed, "matrix-stimulus", &[]),
    )?;
    let matrix_envelope = quantize_series(sentences.envelope)?;
    let matrix_onsets = quantize_series(crate::dsp::acoustic_onsets(&matrix_envelope)?)?;
    let stimuli = Stimuli {
        story_envelope,
        story_onsets,
        matrix_envelope,
        matrix_onsets,
        boundaries: sentences.boundaries,
    };

    let population = FeatureKernels::population(spec.n_channels, derive_seed(master_seed, "population", &[]))?;
    let srt_dist = Normal::new(spec.srt_mean_db, spec.srt_sd_db)
        .map_err(|e| Error::config(format!("cohort SRT distribution: {e}")))?;

    let subjects = (0..spec.n_subjects)
        .into_par_iter()
        .map(|i| {
            let id = SubjectId(i as u32);
            let seed = derive_seed(master_seed, "subject", &[i as u64]);
            let true_srt_db = srt_dist.sample(&mut rng_for(derive_seed(seed, "srt", &[])));
            let kernels = match spec.kernels {
                KernelFamily::SingleLag { lag } => FeatureKernels::single_lag(spec.n_channels, lag)?,
                KernelFamily::Population { individuality } => {
                    FeatureKernels::subject(&population, individuality, derive_seed(seed, "kernel", &[]))?
                }
            };
            let subject_spec = SyntheticSubjectSpec {
                n_channels: spec.n_channels,
                true_srt_db,
                psychometric_slope_db: spec.slope_db,
                kernels,
                noise_level: spec.noise_level,
                seed,
            };
            let simulate = |task: Task, condition: Option<SnrCondition>| -> Result<EegRecording> {
                let k = &subject_spec.kernels;
                let env = stimuli.feature(task, FeatureKind::Envelope);
                let ons = stimuli.feature(task, FeatureKind::Onsets);
                let noise_index = condition.and_then(SnrCondition::index).map_or(0, |c| c as u64 + 1);
                let tag = RecordingTag {
                    subject_id: id,
                    task,
                    condition,
                };
                let rec = simulate_eeg(
                    &[(env, &k.envelope), (ons, &k.onsets)],
                    subject_spec.gain(condition),
                    spec.noise_level,
                    derive_seed(seed, "recording", &[noise_index]),
                    tag,
                )?;
                Ok(rec.map_data(quantize))
            };
            let story = simulate(Task::Story, None)?;
            let matrix = SnrCondition::ALL
                .iter()
                .map(|&c| Ok((c, simulate(Task::Matrix, Some(c))?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            Ok(SubjectRecord {
                subject_id: id,
                spec: subject_spec,
                story,
                matrix,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let cohort = Cohort {
        spec: spec.clone(),
        master_seed,
        stimuli,
        subjects,
    };
    cohort.validate()?;
    Ok(cohort)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CohortSpec {
        CohortSpec {
            n_subjects: 4,
            n_channels: 4,
            story_s: 20.0,
            n_sentences: 5,
            ..CohortSpec::default()
        }
    }

    #[test]
    fn cohort_contract_and_determinism() {
        let a = generate_cohort(&small(), 17).unwrap();
        assert_eq!(a.subjects.len(), 4);
        for s in &a.subjects {
            assert_eq!(s.matrix.len(), 7);
            assert!(s.story.zscore_deviation() < 1e-6);
            for r in s.matrix.values() {
                assert!(r.zscore_deviation() < 1e-6);
                assert!(r.data().iter().all(|&v| v == v as f32 as f64));
            }
        }
        assert_eq!(a.stimuli.boundaries.len(), 5);
        assert_eq!(a, generate_cohort(&small(), 17).unwrap());
        assert_ne!(a.true_srts(), generate_cohort(&small(), 18).unwrap().true_srts());
    }

    #[test]
    fn rejects_small_or_invalid_cohorts() {
        let mut s = small();
        s.n_subjects = 2;
        let msg = generate_cohort(&s, 1).unwrap_err().to_string();
        assert!(msg.contains("n_subjects"), "{msg}");
        let mut s = small();
        s.slope_db = 0.0;
        assert!(generate_cohort(&s, 1).is_err());
    }

    #[test]
    fn gains_follow_condition() {
        let c = generate_cohort(&small(), 3).unwrap();
        let s = &c.subjects[0].spec;
        assert_eq!(s.gain(None), 1.0);
        assert_eq!(s.gain(Some(SnrCondition::Silence)), 1.0);
        let g: Vec<f64> = SnrCondition::ADJUSTED.iter().map(|&k| s.gain(Some(k))).collect();
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn srt_population_mean() {
        // many subjects, tiny recordings: only the SRT draws matter here
        let spec = CohortSpec {
            n_subjects: 200,
            n_channels: 2,
            story_s: 10.0,
            n_sentences: 2,
            sentence_s: 1.0,
            ..CohortSpec::default()
        };
        let c = generate_cohort(&spec, 5).unwrap();
        let srts = c.true_srts();
        let mean = srts.iter().sum::<f64>() / srts.len() as f64;
        let se = 0.56 / (srts.len() as f64).sqrt();
        assert!((mean + 9.07).abs() < 3.0 * se, "mean {mean}");
    }
}
