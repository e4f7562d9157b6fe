//! Per-band preparation of recordings and stimulus features: zero-phase FIR
//! band filtering followed by z-scoring over the whole recording.

use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::dsp::{
    design_bandpass_ls, zscore_slice, BandFilterPlan, BandName, EdgeMode, TimeSeries, ANALYSIS_RATE_HZ,
};
use crate::synth::{Cohort, EegRecording, FeatureKind, SnrCondition, Stimuli, SubjectId, SubjectRecord, Task};
use crate::{Error, Result};

/// Band-pass order used for every band.
pub const FILTER_ORDER: usize = 2000;

/// A designed band filter ready to apply to recordings and features.
///
/// Edges are periodic. Stimuli end in silence, so a causal response wraps
/// onto silent samples and circular filtering commutes with the forward
/// model; reflection would not.
#[derive(Debug, Clone)]
pub struct BandPreprocessor {
    band: BandName,
    plan: BandFilterPlan,
}

impl BandPreprocessor {
    pub fn new(band: BandName) -> Result<Self> {
        let filter = design_bandpass_ls(band.spec(), FILTER_ORDER, ANALYSIS_RATE_HZ)?;
        Ok(Self {
            band,
            plan: BandFilterPlan::new(filter, EdgeMode::Periodic),
        })
    }

    pub fn band(&self) -> BandName {
        self.band
    }

    pub fn recording(&self, rec: &EegRecording) -> Result<EegRecording> {
        let n = rec.n_samples();
        let mut data = Vec::with_capacity(rec.data().len());
        for c in 0..rec.n_channels() {
            let filtered = self.plan.apply(rec.channel(c))?;
            let z = zscore_slice(&filtered).map_err(|_| {
                let tag = rec.tag();
                Error::data(format!(
                    "channel {c} of {} {} has no {} band content",
                    tag.subject_id, tag.task, self.band
                ))
            })?;
            data.extend(z);
        }
        debug_assert_eq!(data.len(), n * rec.n_channels());
        EegRecording::new(rec.tag(), rec.n_channels(), rec.rate(), data)
    }

    pub fn feature(&self, ts: &TimeSeries) -> Result<TimeSeries> {
        let z = zscore_slice(&self.plan.apply(ts.samples())?)?;
        TimeSeries::new(z, ts.rate())?.with_optional_mask(ts.silence_mask().map(<[bool]>::to_vec))
    }
}

/// Band-filtered, z-scored stimulus features.
#[derive(Debug, Clone)]
pub struct BandFeatures {
    pub band: BandName,
    story: [TimeSeries; 2],
    matrix: [TimeSeries; 2],
}

impl BandFeatures {
    pub fn get(&self, task: Task, kind: FeatureKind) -> &TimeSeries {
        let i = kind as usize;
        match task {
            Task::Story => &self.story[i],
            Task::Matrix => &self.matrix[i],
        }
    }
}

pub fn prepare_features(pre: &BandPreprocessor, stimuli: &Stimuli) -> Result<BandFeatures> {
    let f = |task, kind| pre.feature(stimuli.feature(task, kind));
    Ok(BandFeatures {
        band: pre.band(),
        story: [f(Task::Story, FeatureKind::Envelope)?, f(Task::Story, FeatureKind::Onsets)?],
        matrix: [f(Task::Matrix, FeatureKind::Envelope)?, f(Task::Matrix, FeatureKind::Onsets)?],
    })
}

/// One subject's recordings after band preparation.
#[derive(Debug, Clone)]
pub struct PreparedSubject {
    pub subject_id: SubjectId,
    pub story: EegRecording,
    pub matrix: BTreeMap<SnrCondition, EegRecording>,
}

impl PreparedSubject {
    pub fn recording(&self, task: Task, condition: SnrCondition) -> Result<&EegRecording> {
        match task {
            Task::Story => Ok(&self.story),
            Task::Matrix => self.matrix.get(&condition).ok_or_else(|| {
                Error::data(format!("subject {} has no matrix recording at {condition} dB", self.subject_id))
            }),
        }
    }
}

pub fn prepare_subject(pre: &BandPreprocessor, subject: &SubjectRecord) -> Result<PreparedSubject> {
    let matrix = subject
        .matrix
        .iter()
        .map(|(&c, r)| Ok((c, pre.recording(r)?)))
        .collect::<Result<_>>()?;
    Ok(PreparedSubject {
        subject_id: subject.subject_id,
        story: pre.recording(&subject.story)?,
        matrix,
    })
}

/// A whole cohort prepared for one band.
#[derive(Debug, Clone)]
pub struct PreparedBand {
    pub band: BandName,
    pub features: BandFeatures,
    pub subjects: Vec<PreparedSubject>,
    pub boundaries: Vec<(usize, usize)>,
}

pub fn prepare_band(cohort: &Cohort, band: BandName) -> Result<PreparedBand> {
    let pre = BandPreprocessor::new(band)?;
    let features = prepare_features(&pre, &cohort.stimuli)?;
    let subjects = cohort
        .subjects
        .par_iter()
        .map(|s| prepare_subject(&pre, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedBand {
        band,
        features,
        subjects,
        boundaries: cohort.stimuli.boundaries.clone(),
    })
}
