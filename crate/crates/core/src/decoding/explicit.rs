//! Decoders trained directly on pooled lagged designs, one configuration at
//! a time. Slower than the grid but written from the definitions, so it
//! doubles as a cross-check of the statistics path.

use super::grid::{GridOptions, DEFAULT_LAMBDA_REL};
use super::prep::{BandFeatures, PreparedBand, PreparedSubject};
use super::ridge::{
    lag_design_rows, neural_tracking, pool_designs, reconstruct, relative_lambda, train_ridge_lambda,
    LaggedDesign,
};
use super::{DecoderConfig, DecoderType, NtValue, MAX_WINDOW_LAG};
use crate::dsp::TimeSeries;
use crate::synth::{EegRecording, RecordingTag, SnrCondition, SubjectId, Task};
use crate::{Error, Result};

/// Data and regularization used by the explicit path.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeSettings {
    pub lambda_rel: f64,
    pub n_sentences: Option<usize>,
    pub story_samples: Option<usize>,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        Self {
            lambda_rel: DEFAULT_LAMBDA_REL,
            n_sentences: None,
            story_samples: None,
        }
    }
}

impl DecodeSettings {
    fn grid(&self) -> GridOptions {
        GridOptions {
            lambda_rel: self.lambda_rel,
            n_sentences: self.n_sentences,
            story_samples: self.story_samples,
            ..GridOptions::default()
        }
    }
}

fn sentence_rows(sentences: &[(usize, usize)]) -> Vec<usize> {
    sentences.iter().flat_map(|&(s, e)| s..e).collect()
}

/// `trace(XᵀX)` and column count of the widest-window design over `rows`.
fn support_trace(eeg: &EegRecording, rows: &[usize]) -> (f64, usize) {
    let mut trace = 0.0;
    for c in 0..eeg.n_channels() {
        let x = eeg.channel(c);
        for &t in rows {
            trace += x[t..=t + MAX_WINDOW_LAG].iter().map(|v| v * v).sum::<f64>();
        }
    }
    (trace, eeg.n_channels() * (MAX_WINDOW_LAG + 1))
}

struct Pool {
    design: LaggedDesign,
    target: Vec<f64>,
    trace: f64,
    support_cols: usize,
}

fn pool(parts: &[(&EegRecording, Vec<usize>)], max_lag: usize, feature: &TimeSeries) -> Result<Pool> {
    let mut designs = Vec::with_capacity(parts.len());
    let mut target = Vec::new();
    let mut trace = 0.0;
    let mut support_cols = 0;
    for (eeg, rows) in parts {
        designs.push(lag_design_rows(eeg, max_lag, rows)?);
        target.extend(rows.iter().map(|&t| feature.samples()[t]));
        let (tr, cols) = support_trace(eeg, rows);
        trace += tr;
        support_cols = cols;
    }
    Ok(Pool {
        design: pool_designs(&designs)?,
        target,
        trace,
        support_cols,
    })
}

fn fit_and_test(
    train: &[(&EegRecording, Vec<usize>)],
    test: &[(&EegRecording, Vec<usize>)],
    config: &DecoderConfig,
    features: &BandFeatures,
    lambda_rel: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = pool(train, config.max_lag, features.get(config.task, config.feature))?;
    let lambda = relative_lambda(p.trace, p.support_cols, lambda_rel);
    let w = train_ridge_lambda(&p.design, &p.target, lambda)?;
    let q = pool(test, config.max_lag, features.get(Task::Matrix, config.feature))?;
    let recon = reconstruct(&w, &q.design)?;
    Ok((recon.into_samples(), q.target))
}

fn correlate(config: &DecoderConfig, condition: SnrCondition, subject_id: SubjectId, p: Vec<f64>, y: Vec<f64>) -> Result<NtValue> {
    let value = neural_tracking(&TimeSeries::new(p, 64.0)?, &TimeSeries::new(y, 64.0)?)?;
    Ok(NtValue {
        config: *config,
        condition,
        subject_id,
        value,
    })
}

fn check(config: &DecoderConfig, band: &PreparedBand, want: DecoderType) -> Result<()> {
    if config.decoder_type != want {
        return Err(Error::config(format!("{config} is not a {want} configuration")));
    }
    if config.band != band.band {
        return Err(Error::config(format!(
            "{config} needs {} data but the prepared band is {}",
            config.band, band.band
        )));
    }
    if config.max_lag > MAX_WINDOW_LAG {
        return Err(Error::config(format!("max lag {} exceeds {MAX_WINDOW_LAG}", config.max_lag)));
    }
    Ok(())
}

fn training_rows(config: &DecoderConfig, sentences: &[(usize, usize)], story_end: usize) -> Vec<usize> {
    match config.task {
        Task::Story => (0..story_end).collect(),
        Task::Matrix => sentence_rows(sentences),
    }
}

/// Recordings a subject-independent decoder for `held_out` is trained on.
pub fn si_training_sources(
    config: &DecoderConfig,
    condition: SnrCondition,
    band: &PreparedBand,
    held_out: SubjectId,
) -> Result<Vec<RecordingTag>> {
    band.subjects
        .iter()
        .filter(|s| s.subject_id != held_out)
        .map(|s| Ok(s.recording(config.task, condition)?.tag()))
        .collect()
}

/// Leave-one-subject-out: one NT value per subject, each from a decoder
/// trained on every other subject's recordings of the configuration's task.
pub fn run_si_config(
    config: &DecoderConfig,
    condition: SnrCondition,
    band: &PreparedBand,
    settings: &DecodeSettings,
) -> Result<Vec<NtValue>> {
    check(config, band, DecoderType::SubjectIndependent)?;
    if band.subjects.len() < 3 {
        return Err(Error::data("subject-independent decoding needs at least 3 subjects"));
    }
    let opts = settings.grid();
    let sentences = opts.sentences(&band.boundaries)?;
    let story_end = opts.story_rows_end(band.subjects[0].story.n_samples())?;
    let test_rows = sentence_rows(sentences);
    band.subjects
        .iter()
        .map(|held| {
            let mut train = Vec::new();
            for s in band.subjects.iter().filter(|s| s.subject_id != held.subject_id) {
                let rec = s.recording(config.task, condition)?;
                train.push((rec, training_rows(config, sentences, story_end)));
            }
            debug_assert!(train.iter().all(|(r, _)| r.tag().subject_id != held.subject_id));
            let test = [(held.recording(Task::Matrix, condition)?, test_rows.clone())];
            let (p, y) = fit_and_test(&train, &test, config, &band.features, settings.lambda_rel)?;
            correlate(config, condition, held.subject_id, p, y)
        })
        .collect()
}

/// Subject-specific decoding of one subject. Story decoders train on the
/// story and test on the whole matrix condition; matrix decoders run
/// leave-one-sentence-out and correlate the concatenated reconstructions.
pub fn run_ss_config(
    config: &DecoderConfig,
    condition: SnrCondition,
    subject: &PreparedSubject,
    band: &PreparedBand,
    settings: &DecodeSettings,
) -> Result<NtValue> {
    check(config, band, DecoderType::SubjectSpecific)?;
    let opts = settings.grid();
    let sentences = opts.sentences(&band.boundaries)?;
    let matrix = subject.recording(Task::Matrix, condition)?;
    match config.task {
        Task::Story => {
            let story_end = opts.story_rows_end(subject.story.n_samples())?;
            let train = [(&subject.story, (0..story_end).collect())];
            let test = [(matrix, sentence_rows(sentences))];
            let (p, y) = fit_and_test(&train, &test, config, &band.features, settings.lambda_rel)?;
            correlate(config, condition, subject.subject_id, p, y)
        }
        Task::Matrix => {
            let (mut p_all, mut y_all) = (Vec::new(), Vec::new());
            for k in 0..sentences.len() {
                let (train_rows, test_rows) = sentence_fold(sentences, k);
                let (p, y) = fit_and_test(
                    &[(matrix, train_rows)],
                    &[(matrix, test_rows)],
                    config,
                    &band.features,
                    settings.lambda_rel,
                )?;
                p_all.extend(p);
                y_all.extend(y);
            }
            correlate(config, condition, subject.subject_id, p_all, y_all)
        }
    }
}

/// Training and held-out sample indices of sentence fold `k`.
pub fn sentence_fold(sentences: &[(usize, usize)], k: usize) -> (Vec<usize>, Vec<usize>) {
    let train = sentences
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .flat_map(|(_, &(s, e))| s..e)
        .collect();
    let (s, e) = sentences[k];
    (train, (s..e).collect())
}
