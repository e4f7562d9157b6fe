use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{ResponseKernel, SnrCondition, SubjectId, Task};
use crate::dsp::{highpass_zero_phase, mean_sd, zscore_in_place, TimeSeries, ANALYSIS_RATE_HZ};
use crate::rng::{derive_seed, rng_for};
use crate::{Error, Result};

/// Cutoff of the high-pass applied to the background noise.
pub const NOISE_HIGHPASS_HZ: f64 = 0.5;

/// Which subject, task and listening condition a recording belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecordingTag {
    pub subject_id: SubjectId,
    pub task: Task,
    /// `None` for the story recording.
    pub condition: Option<SnrCondition>,
}

/// A channels × samples recording at 64 Hz, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EegRecording {
    tag: RecordingTag,
    n_channels: usize,
    n_samples: usize,
    rate: f64,
    data: Vec<f64>,
}

impl EegRecording {
    pub fn new(tag: RecordingTag, n_channels: usize, rate: f64, data: Vec<f64>) -> Result<Self> {
        if n_channels == 0 || data.len() % n_channels != 0 {
            return Err(Error::data(format!(
                "{} values do not split into {n_channels} channels",
                data.len()
            )));
        }
        if !(rate > 0.0) {
            return Err(Error::data("recording rate must be positive"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite value in recording of {} {}",
                tag.subject_id, tag.task
            )));
        }
        Ok(Self {
            tag,
            n_channels,
            n_samples: data.len() / n_channels,
            rate,
            data,
        })
    }

    pub fn tag(&self) -> RecordingTag {
        self.tag
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.n_samples..(c + 1) * self.n_samples]
    }

    /// Largest deviation of any channel's mean from 0 or SD from 1.
    pub fn zscore_deviation(&self) -> f64 {
        (0..self.n_channels)
            .map(|c| {
                let (m, s) = mean_sd(self.channel(c));
                m.abs().max((s - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn map_data(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }
}

/// Unit-variance 1/f noise of length `n` (power ∝ 1/f, no DC).
pub fn pink_noise(n: usize, seed: u64) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let mut rng = rng_for(seed);
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for k in 1..n {
        let f = k.min(n - k) as f64;
        buf[k] /= f.sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mut x: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let (m, s) = mean_sd(&x);
    x.iter_mut().for_each(|v| *v = (*v - m) / s);
    x
}

/// Forward model: every channel is `gain` times the sum of the kernel
/// responses to each source, plus `noise_level` times high-passed 1/f noise,
/// then z-scored.
///
/// Sources are scaled to unit RMS (without centering, so silent stretches
/// stay at zero) before convolution.
pub fn simulate_eeg(
    sources: &[(&TimeSeries, &ResponseKernel)],
    gain: f64,
    noise_level: f64,
    seed: u64,
    tag: RecordingTag,
) -> Result<EegRecording> {
    let (first, _) = sources
        .first()
        .ok_or_else(|| Error::config("forward model needs at least one source"))?;
    let n = first.len();
    let n_channels = sources[0].1.n_channels();
    if !(0.0..=1.0).contains(&gain) {
        return Err(Error::config(format!("gain must lie in [0, 1], got {gain}")));
    }
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return Err(Error::config(format!("noise level must be ≥ 0, got {noise_level}")));
    }
    for (feature, kernel) in sources {
        if (feature.rate() - ANALYSIS_RATE_HZ).abs() > 1e-9 {
            return Err(Error::data(format!(
                "feature at {} Hz but response kernels are defined at {ANALYSIS_RATE_HZ} Hz",
                feature.rate()
            )));
        }
        if feature.len() != n || kernel.n_channels() != n_channels {
            return Err(Error::data("forward-model sources disagree in length or channel count"));
        }
    }

    let mut data = vec![0.0; n_channels * n];
    for (feature, kernel) in sources {
        let x = feature.samples();
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        if rms == 0.0 {
            continue;
        }
        for c in 0..n_channels {
            let k = kernel.channel(c);
            let out = &mut data[c * n..(c + 1) * n];
            for (l, &w) in k.iter().enumerate().filter(|(_, w)| **w != 0.0) {
                let scaled = gain * w / rms;
                for t in l..n {
                    out[t] += scaled * x[t - l];
                }
            }
        }
    }
    if noise_level > 0.0 {
        for c in 0..n_channels {
            let raw = pink_noise(n, derive_seed(seed, "channel-noise", &[c as u64]));
            let mut noise = highpass_zero_phase(&raw, NOISE_HIGHPASS_HZ, ANALYSIS_RATE_HZ)?;
            let (m, s) = mean_sd(&noise);
            noise.iter_mut().for_each(|v| *v = (*v - m) / s);
            for (o, v) in data[c * n..(c + 1) * n].iter_mut().zip(&noise) {
                *o += noise_level * v;
            }
        }
    }
    for c in 0..n_channels {
        zscore_in_place(&mut data[c * n..(c + 1) * n]).map_err(|_| {
            Error::data(format!(
                "channel {c} of {} {} has zero variance",
                tag.subject_id, tag.task
            ))
        })?;
    }
    EegRecording::new(tag, n_channels, ANALYSIS_RATE_HZ, data)
}
