//! Speech-like feature streams at the analysis rate.
//!
//! The envelope is a train of syllable-sized raised-cosine bumps (about four
//! per second) grouped into phrases, with pauses between phrases. Every stream
//! ends in at least half a second of silence, so a causal response to it wraps
//! around circularly without touching the stimulus.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use std::f64::consts::PI;

use super::FeatureKind;
use crate::dsp::{acoustic_onsets, TimeSeries, ANALYSIS_RATE_HZ};
use crate::rng::rng_for;
use crate::{Error, Result};

/// Samples of silence appended after the last speech sample.
const TAIL_S: f64 = 0.5;

fn secs(s: f64) -> usize {
    (s * ANALYSIS_RATE_HZ).round() as usize
}

/// Adds syllable bumps to `env[start..end]`.
fn fill_syllables(env: &mut [f64], start: usize, end: usize, rng: &mut ChaCha12Rng) {
    let mut t = start as f64 + rng.random_range(0.0..0.05) * ANALYSIS_RATE_HZ;
    let stress_phase = rng.random_range(0.0..2.0 * PI);
    while t < end as f64 {
        let dur = rng.random_range(0.14..0.30) * ANALYSIS_RATE_HZ;
        let rel = (t - start as f64) / ANALYSIS_RATE_HZ;
        let stress = 0.75 + 0.25 * (2.0 * PI * 0.9 * rel + stress_phase).sin();
        let amp = stress * rng.random_range(0.45..1.0);
        let t0 = t;
        let t1 = (t + dur).min(end as f64);
        let (i0, i1) = (t0.ceil() as usize, t1.floor() as usize);
        for (i, v) in env.iter_mut().enumerate().take(i1.min(end)).skip(i0) {
            let u = (i as f64 - t0) / dur;
            *v += amp * 0.5 * (1.0 - (2.0 * PI * u).cos());
        }
        t += rng.random_range(0.18..0.30) * ANALYSIS_RATE_HZ;
    }
}

fn story_envelope(duration_s: f64, seed: u64) -> Vec<f64> {
    let n = secs(duration_s).max(secs(TAIL_S) + 2);
    let speech_end = n - secs(TAIL_S);
    let mut rng = rng_for(seed);
    let mut env = vec![0.0; n];
    let mut pos = 0usize;
    while pos < speech_end {
        let phrase = secs(rng.random_range(1.5..4.0));
        let end = (pos + phrase).min(speech_end);
        fill_syllables(&mut env, pos, end, &mut rng);
        pos = end + secs(rng.random_range(0.15..0.5));
    }
    env
}

/// A continuous speech feature stream of `duration_s` seconds at 64 Hz.
///
/// Onset streams are the onsets of the envelope generated from the same seed.
pub fn generate_feature_stream(kind: FeatureKind, duration_s: f64, seed: u64) -> Result<TimeSeries> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::config(format!("stream duration must be positive, got {duration_s}")));
    }
    let env = TimeSeries::new(story_envelope(duration_s, seed), ANALYSIS_RATE_HZ)?;
    match kind {
        FeatureKind::Envelope => Ok(env),
        FeatureKind::Onsets => acoustic_onsets(&env),
    }
}

/// Envelope and onsets of a sentence list separated by silent gaps, with the
/// sample span `[start, end)` of every sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceStimulus {
    pub envelope: TimeSeries,
    pub onsets: TimeSeries,
    pub boundaries: Vec<(usize, usize)>,
}

/// Lays out `n_sentences` sentences of roughly `sentence_s` seconds with
/// `gap_s` of silence before, between and after them. Silence is marked in
/// the mask.
pub fn generate_sentence_stimulus(
    n_sentences: usize,
    sentence_s: f64,
    gap_s: f64,
    seed: u64,
) -> Result<SentenceStimulus> {
    if n_sentences == 0 {
        return Err(Error::config("a sentence stimulus needs at least one sentence"));
    }
    if !(sentence_s >= 0.5 && gap_s >= TAIL_S) {
        return Err(Error::config(format!(
            "sentences must last at least 0.5 s and gaps at least {TAIL_S} s (got {sentence_s}, {gap_s})"
        )));
    }
    let mut rng = rng_for(seed);
    let gap = secs(gap_s);
    let mut lengths = Vec::with_capacity(n_sentences);
    for _ in 0..n_sentences {
        lengths.push(secs(sentence_s * rng.random_range(0.9..1.1)));
    }
    let total = gap + lengths.iter().map(|l| l + gap).sum::<usize>();
    let mut env = vec![0.0; total];
    let mut mask = vec![true; total];
    let mut boundaries = Vec::with_capacity(n_sentences);
    let mut pos = gap;
    for len in lengths {
        let (start, end) = (pos, pos + len);
        fill_syllables(&mut env, start, end, &mut rng);
        mask[start..end].iter_mut().for_each(|m| *m = false);
        boundaries.push((start, end));
        pos = end + gap;
    }
    let envelope = TimeSeries::new(env, ANALYSIS_RATE_HZ)?.with_mask(mask)?;
    let onsets = acoustic_onsets(&envelope)?;
    Ok(SentenceStimulus {
        envelope,
        onsets,
        boundaries,
    })
}
