//! Synthetic subjects: speech-feature streams, multichannel neural-like
//! recordings and ground-truth SRTs.
//!
//! Each recording follows a linear forward model. The clean response to the
//! envelope and onset streams is scaled by the subject's psychometric gain at
//! the recording's SNR, and band-limited 1/f noise is added on top.

mod cohort;
mod forward;
pub mod io;
mod kernel;
mod stimulus;

pub use cohort::{
    generate_cohort, Cohort, CohortSpec, KernelFamily, Stimuli, SubjectRecord, SyntheticSubjectSpec,
};
pub use forward::{pink_noise, simulate_eeg, EegRecording, RecordingTag, NOISE_HIGHPASS_HZ};
pub use kernel::{FeatureKernels, ResponseKernel, MAX_KERNEL_LAGS};
pub use stimulus::{generate_feature_stream, generate_sentence_stimulus, SentenceStimulus};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Probability-of-understanding curve: `½ [1 + erf((snr − srt) / (slope √2))]`.
pub fn intelligibility_gain(snr_db: f64, srt_db: f64, slope_db: f64) -> f64 {
    0.5 * (1.0 + libm::erf((snr_db - srt_db) / (slope_db * std::f64::consts::SQRT_2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Story,
    Matrix,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Story, Task::Matrix];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Story => "story",
            Task::Matrix => "matrix",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "story" => Ok(Task::Story),
            "matrix" => Ok(Task::Matrix),
            other => Err(Error::config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Envelope,
    Onsets,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 2] = [FeatureKind::Envelope, FeatureKind::Onsets];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Envelope => "envelope",
            FeatureKind::Onsets => "onsets",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "envelope" => Ok(FeatureKind::Envelope),
            "onsets" => Ok(FeatureKind::Onsets),
            other => Err(Error::config(format!("unknown feature {other:?}"))),
        }
    }
}

/// A matrix-test listening condition. SNRs are kept in tenths of a dB so
/// conditions compare and hash exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SnrCondition {
    Snr(i32),
    Silence,
}

impl SnrCondition {
    /// The seven matrix conditions, ascending SNR then silence.
    pub const ALL: [SnrCondition; 7] = [
        SnrCondition::Snr(-125),
        SnrCondition::Snr(-95),
        SnrCondition::Snr(-65),
        SnrCondition::Snr(-35),
        SnrCondition::Snr(-5),
        SnrCondition::Snr(25),
        SnrCondition::Silence,
    ];

    /// The noise baseline subtracted during feature assembly.
    pub const BASELINE: SnrCondition = SnrCondition::Snr(-125);

    /// The five conditions that survive baseline adjustment.
    pub const ADJUSTED: [SnrCondition; 5] = [
        SnrCondition::Snr(-95),
        SnrCondition::Snr(-65),
        SnrCondition::Snr(-35),
        SnrCondition::Snr(-5),
        SnrCondition::Snr(25),
    ];

    pub fn db(self) -> Option<f64> {
        match self {
            SnrCondition::Snr(t) => Some(t as f64 / 10.0),
            SnrCondition::Silence => None,
        }
    }

    /// Position in [`SnrCondition::ALL`], if canonical.
    pub fn index(self) -> Option<usize> {
        Self::ALL.iter().position(|&c| c == self)
    }
}

impl fmt::Display for SnrCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnrCondition::Snr(t) => {
                let sign = if *t < 0 { "-" } else { "" };
                write!(f, "{sign}{}.{}", t.abs() / 10, t.abs() % 10)
            }
            SnrCondition::Silence => f.write_str("silence"),
        }
    }
}

impl FromStr for SnrCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("silence") {
            return Ok(SnrCondition::Silence);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::config(format!("invalid SNR condition {s:?}")))?;
        let tenths = (v * 10.0).round();
        if (v * 10.0 - tenths).abs() > 1e-6 || !tenths.is_finite() {
            return Err(Error::config(format!("SNR condition {s:?} is not a multiple of 0.1 dB")));
        }
        Ok(SnrCondition::Snr(tenths as i32))
    }
}

impl From<SnrCondition> for String {
    fn from(c: SnrCondition) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for SnrCondition {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Zero-based subject index; displayed one-based as `S01`, `S02`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct SubjectId(pub u32);

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{:02}", self.0 + 1)
    }
}

impl FromStr for SubjectId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let n: u32 = s
            .trim()
            .strip_prefix('S')
            .and_then(|d| d.parse().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::data(format!("invalid subject id {s:?}")))?;
        Ok(SubjectId(n - 1))
    }
}

impl From<SubjectId> for String {
    fn from(s: SubjectId) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for SubjectId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}
