//! Deterministic signal processing on uniformly sampled series.

mod filter;
mod fir;
mod gammatone;
pub mod io;

pub use filter::{
    filter_zero_phase, highpass_zero_phase, resample, BandFilterPlan, EdgeMode,
};
pub use fir::{design_bandpass_ls, FilterMeasurement, FirFilter, MEASUREMENT_GRID_POINTS};
pub use gammatone::{erb_space, gammatone_envelope, GammatoneBankSpec};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Sampling rate of every decoder-facing signal.
pub const ANALYSIS_RATE_HZ: f64 = 64.0;

/// A uniformly sampled real signal with an optional silence mask
/// (`true` marks inter-sentence silence).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
    rate: f64,
    silence_mask: Option<Vec<bool>>,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::data(format!("sampling rate must be positive, got {rate}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            rate,
            silence_mask: None,
        })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.samples.len() {
            return Err(Error::data(format!(
                "mask length {} does not match sample length {}",
                mask.len(),
                self.samples.len()
            )));
        }
        self.silence_mask = Some(mask);
        Ok(self)
    }

    pub fn with_optional_mask(self, mask: Option<Vec<bool>>) -> Result<Self> {
        match mask {
            Some(m) => self.with_mask(m),
            None => Ok(self),
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn silence_mask(&self) -> Option<&[bool]> {
        self.silence_mask.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }

    /// Same rate and mask, new samples (length must match).
    pub(crate) fn map_samples(&self, samples: Vec<f64>) -> Result<Self> {
        TimeSeries::new(samples, self.rate)?.with_optional_mask(self.silence_mask.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandName {
    Delta,
    Theta,
    Broadband,
}

impl BandName {
    pub const ALL: [BandName; 3] = [BandName::Delta, BandName::Theta, BandName::Broadband];

    pub fn as_str(self) -> &'static str {
        match self {
            BandName::Delta => "delta",
            BandName::Theta => "theta",
            BandName::Broadband => "broadband",
        }
    }

    pub fn spec(self) -> BandSpec {
        BandSpec::canonical(self)
    }
}

impl fmt::Display for BandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BandName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "delta" => Ok(BandName::Delta),
            "theta" => Ok(BandName::Theta),
            "broadband" => Ok(BandName::Broadband),
            other => Err(Error::config(format!("unknown band {other:?}"))),
        }
    }
}

/// A named pass band in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: BandName,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandSpec {
    pub fn canonical(name: BandName) -> Self {
        let (low_hz, high_hz) = match name {
            BandName::Delta => (0.5, 4.0),
            BandName::Theta => (4.0, 8.0),
            BandName::Broadband => (0.5, 30.0),
        };
        Self {
            name,
            low_hz,
            high_hz,
        }
    }

    pub fn validate(&self, rate: f64) -> Result<()> {
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < rate / 2.0) {
            return Err(Error::config(format!(
                "band {} ({}..{} Hz) invalid at {} Hz sampling",
                self.name, self.low_hz, self.high_hz, rate
            )));
        }
        Ok(())
    }

    pub fn center_hz(&self) -> f64 {
        (self.low_hz * self.high_hz).sqrt()
    }
}

/// Half-wave rectified first difference; the first sample is 0.
pub fn acoustic_onsets(envelope: &TimeSeries) -> Result<TimeSeries> {
    let x = envelope.samples();
    if x.len() < 2 {
        return Err(Error::data("acoustic onsets need at least 2 envelope samples"));
    }
    let mut out = Vec::with_capacity(x.len());
    out.push(0.0);
    out.extend(x.windows(2).map(|w| (w[1] - w[0]).max(0.0)));
    envelope.map_samples(out)
}

/// Z-scores a series over its whole length (population standard deviation).
pub fn zscore(x: &TimeSeries) -> Result<TimeSeries> {
    let z = zscore_slice(x.samples())?;
    x.map_samples(z)
}

/// Slice version of [`zscore`].
pub fn zscore_slice(x: &[f64]) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    zscore_in_place(&mut out)?;
    Ok(out)
}

pub(crate) fn zscore_in_place(x: &mut [f64]) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::data("z-scoring needs at least 2 samples"));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() || sd <= f64::EPSILON * mean.abs() {
        return Err(Error::data("zero variance: cannot z-score a degenerate recording"));
    }
    for v in x.iter_mut() {
        *v = (*v - mean) / sd;
    }
    Ok(())
}

pub(crate) fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(v: &[f64]) -> TimeSeries {
        TimeSeries::new(v.to_vec(), 64.0).unwrap()
    }

    #[test]
    fn time_series_rejects_bad_input() {
        assert!(TimeSeries::new(vec![1.0], 0.0).is_err());
        assert!(TimeSeries::new(vec![1.0, f64::NAN], 64.0).is_err());
        assert!(ts(&[1.0, 2.0]).with_mask(vec![true]).is_err());
    }

    #[test]
    fn onsets_hand_example() {
        let o = acoustic_onsets(&ts(&[0.0, 1.0, 3.0, 2.0, 4.0])).unwrap();
        assert_eq!(o.samples(), &[0.0, 1.0, 2.0, 0.0, 2.0]);
    }

    #[test]
    fn onsets_decreasing_and_constant() {
        let o = acoustic_onsets(&ts(&[5.0, 4.0, 2.0, 1.0])).unwrap();
        assert!(o.samples().iter().all(|&v| v == 0.0));
        let o = acoustic_onsets(&ts(&[2.0; 6])).unwrap();
        assert!(o.samples().iter().all(|&v| v == 0.0));
        assert!(acoustic_onsets(&ts(&[1.0])).is_err());
    }

    #[test]
    fn onsets_keep_mask_and_rate() {
        let e = ts(&[0.0, 1.0, 0.5]).with_mask(vec![true, false, false]).unwrap();
        let o = acoustic_onsets(&e).unwrap();
        assert_eq!(o.silence_mask(), Some(&[true, false, false][..]));
        assert_eq!(o.rate(), 64.0);
    }

    #[test]
    fn zscore_hand_example() {
        let z = zscore(&ts(&[1.0, 2.0, 3.0])).unwrap();
        let e = 1.5f64.sqrt();
        for (a, b) in z.samples().iter().zip([-e, 0.0, e]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((z.samples()[0] + 1.2247).abs() < 1e-4);
    }

    #[test]
    fn zscore_rejects_degenerate() {
        assert!(zscore(&ts(&[3.0, 3.0, 3.0])).is_err());
        assert!(zscore(&ts(&[3.0])).is_err());
    }

    #[test]
    fn band_validation() {
        for b in BandName::ALL {
            b.spec().validate(64.0).unwrap();
        }
        assert!(BandName::Broadband.spec().validate(50.0).is_err());
        assert_eq!("Theta".parse::<BandName>().unwrap(), BandName::Theta);
        assert!("gamma".parse::<BandName>().is_err());
    }

    proptest! {
        #[test]
        fn zscore_moments_idempotence_affine(
            v in prop::collection::vec(-100.0f64..100.0, 3..200),
            a in 0.1f64..50.0,
            b in -20.0f64..20.0,
        ) {
            let (_, sd) = mean_sd(&v);
            prop_assume!(sd > 1e-3);
            let z = zscore_slice(&v).unwrap();
            let (m, s) = mean_sd(&z);
            prop_assert!(m.abs() < 1e-10);
            prop_assert!((s - 1.0).abs() < 1e-10);
            let zz = zscore_slice(&z).unwrap();
            for (p, q) in z.iter().zip(&zz) {
                prop_assert!((p - q).abs() < 1e-10);
            }
            let affine: Vec<f64> = v.iter().map(|x| a * x + b).collect();
            let za = zscore_slice(&affine).unwrap();
            for (p, q) in z.iter().zip(&za) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }

        #[test]
        fn onsets_nonnegative_and_total_rise(
            steps in prop::collection::vec(0.0f64..3.0, 2..100),
        ) {
            let mut acc = 0.0;
            let env: Vec<f64> = steps.iter().map(|s| { acc += s; acc }).collect();
            let o = acoustic_onsets(&ts(&env)).unwrap();
            prop_assert!(o.samples().iter().all(|&x| x >= 0.0));
            let total: f64 = o.samples().iter().sum();
            prop_assert!((total - (env[env.len() - 1] - env[0])).abs() < 1e-9);
        }
    }
}
