//! From NT values to per-subject feature vectors: baseline adjustment
//! against the −12.5 dB condition, concatenation in canonical order, and the
//! elementwise ERF transform.

pub mod io;

use std::collections::BTreeMap;

use crate::decoding::{enumerate_configs, DecoderConfig, DecoderType, NtKey, NtTable};
use crate::synth::{SnrCondition, SubjectId};
use crate::{Error, Result};

/// Adjusted conditions per configuration.
pub const ADJUSTED_PER_CONFIG: usize = 5;

/// Length of a full adjusted NT vector: 648 configurations × 5 conditions.
pub const FEATURE_DIM: usize = 648 * ADJUSTED_PER_CONFIG;

/// Baseline-adjusted values of one configuration: `NT(snr) − NT(−12.5 dB)`
/// for the five remaining SNRs in ascending order. Silence is dropped.
pub fn adjust_baseline(row: &BTreeMap<SnrCondition, f64>) -> Result<[f64; ADJUSTED_PER_CONFIG]> {
    let get = |c: SnrCondition| {
        row.get(&c)
            .copied()
            .ok_or_else(|| Error::data(format!("NT row is missing the {c} dB condition")))
    };
    let base = get(SnrCondition::BASELINE)?;
    get(SnrCondition::Silence)?;
    let mut out = [0.0; ADJUSTED_PER_CONFIG];
    for (o, c) in out.iter_mut().zip(SnrCondition::ADJUSTED) {
        *o = get(c)? - base;
    }
    Ok(out)
}

/// Position map of a feature vector: configuration-major, SNR minor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorLayout {
    configs: Vec<DecoderConfig>,
}

impl VectorLayout {
    /// The full 3240-element layout over the canonical grid.
    pub fn full() -> Self {
        Self {
            configs: enumerate_configs(),
        }
    }

    /// A layout over a subset of configurations; they are put in canonical
    /// order.
    pub fn new(mut configs: Vec<DecoderConfig>) -> Result<Self> {
        configs.sort();
        configs.dedup();
        if configs.is_empty() {
            return Err(Error::config("a feature layout needs at least one configuration"));
        }
        Ok(Self { configs })
    }

    /// The configurations of `self` that pass `keep`.
    pub fn restrict(&self, keep: impl Fn(&DecoderConfig) -> bool) -> Result<Self> {
        Self::new(self.configs.iter().copied().filter(|c| keep(c)).collect())
    }

    /// Subject-independent or subject-specific half of the layout.
    pub fn only(&self, decoder_type: DecoderType) -> Result<Self> {
        self.restrict(|c| c.decoder_type == decoder_type)
    }

    pub fn configs(&self) -> &[DecoderConfig] {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.configs.len() * ADJUSTED_PER_CONFIG
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn entry(&self, index: usize) -> (DecoderConfig, SnrCondition) {
        (
            self.configs[index / ADJUSTED_PER_CONFIG],
            SnrCondition::ADJUSTED[index % ADJUSTED_PER_CONFIG],
        )
    }

    pub fn position(&self, config: &DecoderConfig, snr: SnrCondition) -> Option<usize> {
        let ci = self.configs.binary_search(config).ok()?;
        let si = SnrCondition::ADJUSTED.iter().position(|&c| c == snr)?;
        Some(ci * ADJUSTED_PER_CONFIG + si)
    }

    /// Positions of `sub`'s entries inside `self`.
    pub fn positions_of(&self, sub: &VectorLayout) -> Result<Vec<usize>> {
        (0..sub.len())
            .map(|i| {
                let (c, s) = sub.entry(i);
                self.position(&c, s)
                    .ok_or_else(|| Error::data(format!("{c} is not part of the source layout")))
            })
            .collect()
    }
}

/// Baseline-adjusted NT values of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedNtVector {
    pub subject_id: SubjectId,
    pub values: Vec<f64>,
}

impl AdjustedNtVector {
    /// The entries of `sub`, a restriction of `layout`.
    pub fn select(&self, layout: &VectorLayout, sub: &VectorLayout) -> Result<Self> {
        let pos = layout.positions_of(sub)?;
        Ok(Self {
            subject_id: self.subject_id,
            values: pos.iter().map(|&i| self.values[i]).collect(),
        })
    }
}

/// ERF-transformed vector, each entry in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ErfAdjustedVector {
    pub subject_id: SubjectId,
    pub values: Vec<f64>,
    pub sigma_used: f64,
}

/// Builds one subject's adjusted vector. Every cell of the layout's
/// configurations must be present; the error lists what is missing.
pub fn assemble_vector(table: &NtTable, subject_id: SubjectId, layout: &VectorLayout) -> Result<AdjustedNtVector> {
    let missing = table.missing(layout.configs(), &[subject_id]);
    if !missing.is_empty() {
        let shown: Vec<String> = missing
            .iter()
            .take(10)
            .map(|k| format!("{} at {} dB", k.config, k.condition))
            .collect();
        return Err(Error::data(format!(
            "NT table for {subject_id} lacks {} cells: {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > 10 { ", ..." } else { "" }
        )));
    }
    let mut values = Vec::with_capacity(layout.len());
    for &config in layout.configs() {
        let row: BTreeMap<SnrCondition, f64> = SnrCondition::ALL
            .iter()
            .map(|&condition| {
                let key = NtKey {
                    config,
                    condition,
                    subject_id,
                };
                (condition, table.get(&key).expect("checked above"))
            })
            .collect();
        values.extend(adjust_baseline(&row)?);
    }
    Ok(AdjustedNtVector { subject_id, values })
}

/// Adjusted vectors of the given subjects, in the given order.
pub fn assemble_cohort(table: &NtTable, subjects: &[SubjectId], layout: &VectorLayout) -> Result<Vec<AdjustedNtVector>> {
    subjects.iter().map(|&s| assemble_vector(table, s, layout)).collect()
}

/// `½ [1 + erf(v / (σ √2))]`, the psychometric curve centred at zero.
pub fn erf_value(v: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + libm::erf(v / (sigma * std::f64::consts::SQRT_2)))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("ERF steepness sigma must be positive, got {sigma}")));
    }
    Ok(())
}

pub fn erf_transform_values(values: &[f64], sigma: f64) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    Ok(values.iter().map(|&v| erf_value(v, sigma)).collect())
}

pub fn erf_transform(v: &AdjustedNtVector, sigma: f64) -> Result<ErfAdjustedVector> {
    Ok(ErfAdjustedVector {
        subject_id: v.subject_id,
        values: erf_transform_values(&v.values, sigma)?,
        sigma_used: sigma,
    })
}

/// Population standard deviation of every value of every vector.
pub fn pooled_sd<'a>(vectors: impl IntoIterator<Item = &'a AdjustedNtVector>) -> f64 {
    let (mut n, mut s, mut ss) = (0.0, 0.0, 0.0);
    for v in vectors {
        for &x in &v.values {
            n += 1.0;
            s += x;
            ss += x * x;
        }
    }
    if n == 0.0 {
        return 0.0;
    }
    let m = s / n;
    (ss / n - m * m).max(0.0).sqrt()
}
