use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::dsp::BandName;
use crate::synth::{FeatureKind, SnrCondition, Task};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderType {
    SubjectIndependent,
    SubjectSpecific,
}

impl DecoderType {
    pub const ALL: [DecoderType; 2] = [DecoderType::SubjectIndependent, DecoderType::SubjectSpecific];

    pub fn as_str(self) -> &'static str {
        match self {
            DecoderType::SubjectIndependent => "si",
            DecoderType::SubjectSpecific => "ss",
        }
    }
}

impl fmt::Display for DecoderType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecoderType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "si" | "subject_independent" => Ok(DecoderType::SubjectIndependent),
            "ss" | "subject_specific" => Ok(DecoderType::SubjectSpecific),
            other => Err(Error::config(format!("unknown decoder type {other:?}"))),
        }
    }
}

/// Maximum lags of the 27 integration windows: 5 to 31 samples at 64 Hz
/// (0–78 ms up to 0–484 ms).
pub fn canonical_windows() -> Vec<usize> {
    (5..=31).collect()
}

/// Widest canonical window; fixes the shared row support and ridge scale.
pub const MAX_WINDOW_LAG: usize = 31;

/// One point of the decoder grid.
///
/// The derived ordering is the canonical one: task, feature, band,
/// decoder type, window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub task: Task,
    pub feature: FeatureKind,
    pub band: BandName,
    pub decoder_type: DecoderType,
    pub max_lag: usize,
}

impl DecoderConfig {
    /// Human-readable stable key, e.g. `story/envelope/delta/si/5`.
    pub fn key(&self) -> String {
        format!(
            "{}/{}/{}/{}/{}",
            self.task, self.feature, self.band, self.decoder_type, self.max_lag
        )
    }

    /// 64-bit FNV-1a hash of [`DecoderConfig::key`].
    pub fn hash64(&self) -> u64 {
        self.key().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
        })
    }

    pub fn n_weights(&self, n_channels: usize) -> usize {
        n_channels * (self.max_lag + 1)
    }
}

impl fmt::Display for DecoderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Restricts the grid for quick runs. Empty lists mean "no restriction".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFilter {
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub bands: Vec<BandName>,
    #[serde(default)]
    pub windows: Vec<usize>,
}

impl ConfigFilter {
    pub fn is_unrestricted(&self) -> bool {
        self.tasks.is_empty() && self.bands.is_empty() && self.windows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let canon = canonical_windows();
        if let Some(w) = self.windows.iter().find(|w| !canon.contains(w)) {
            return Err(Error::config(format!(
                "window {w} is not one of the canonical max lags 5..=31"
            )));
        }
        Ok(())
    }

    pub fn accepts(&self, c: &DecoderConfig) -> bool {
        (self.tasks.is_empty() || self.tasks.contains(&c.task))
            && (self.bands.is_empty() || self.bands.contains(&c.band))
            && (self.windows.is_empty() || self.windows.contains(&c.max_lag))
    }

    pub fn accepts_band(&self, b: BandName) -> bool {
        self.bands.is_empty() || self.bands.contains(&b)
    }

    pub fn accepts_task(&self, t: Task) -> bool {
        self.tasks.is_empty() || self.tasks.contains(&t)
    }
}

/// All 648 configurations in canonical order.
pub fn enumerate_configs() -> Vec<DecoderConfig> {
    let mut out = Vec::with_capacity(648);
    for task in Task::ALL {
        for feature in FeatureKind::ALL {
            for band in BandName::ALL {
                for decoder_type in DecoderType::ALL {
                    for max_lag in canonical_windows() {
                        out.push(DecoderConfig {
                            task,
                            feature,
                            band,
                            decoder_type,
                            max_lag,
                        });
                    }
                }
            }
        }
    }
    out
}

/// The canonical configurations that pass `filter`, order preserved.
pub fn enumerate_filtered(filter: &ConfigFilter) -> Vec<DecoderConfig> {
    enumerate_configs().into_iter().filter(|c| filter.accepts(c)).collect()
}

/// Decoders trained per full run: one per configuration and matrix condition.
pub fn decoders_per_run(configs: &[DecoderConfig]) -> usize {
    configs.len() * SnrCondition::ALL.len()
}
