use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::FeatureKind;
use crate::rng::{derive_seed, rng_for};
use crate::{Error, Result};

/// Longest response the forward model supports: 32 lags, 0 to 484 ms at 64 Hz.
pub const MAX_KERNEL_LAGS: usize = 32;

/// Per-channel lag weights of the forward model, channel-major, with unit
/// total energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseKernel {
    n_channels: usize,
    n_lags: usize,
    weights: Vec<f64>,
}

impl ResponseKernel {
    /// Builds a kernel and rescales it to unit energy.
    pub fn new(n_channels: usize, n_lags: usize, weights: Vec<f64>) -> Result<Self> {
        if n_channels == 0 || n_lags == 0 || n_lags > MAX_KERNEL_LAGS {
            return Err(Error::config(format!(
                "kernel needs ≥ 1 channel and 1..={MAX_KERNEL_LAGS} lags (got {n_channels} × {n_lags})"
            )));
        }
        if weights.len() != n_channels * n_lags {
            return Err(Error::config(format!(
                "kernel has {} weights, expected {}",
                weights.len(),
                n_channels * n_lags
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::config("kernel weights must be finite"));
        }
        let energy: f64 = weights.iter().map(|w| w * w).sum();
        if energy == 0.0 {
            return Err(Error::config("kernel must have at least one nonzero weight"));
        }
        let s = energy.sqrt();
        Ok(Self {
            n_channels,
            n_lags,
            weights: weights.into_iter().map(|w| w / s).collect(),
        })
    }

    /// Equal weight at a single lag on the selected channels.
    pub fn single_lag(n_channels: usize, lag: usize, on: impl Fn(usize) -> bool) -> Result<Self> {
        let n_lags = lag + 1;
        let mut w = vec![0.0; n_channels * n_lags];
        for c in (0..n_channels).filter(|&c| on(c)) {
            w[c * n_lags + lag] = 1.0;
        }
        Self::new(n_channels, n_lags, w)
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_lags(&self) -> usize {
        self.n_lags
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.weights[c * self.n_lags..(c + 1) * self.n_lags]
    }
}

/// One kernel per driving feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureKernels {
    pub envelope: ResponseKernel,
    pub onsets: ResponseKernel,
}

impl FeatureKernels {
    pub fn get(&self, kind: FeatureKind) -> &ResponseKernel {
        match kind {
            FeatureKind::Envelope => &self.envelope,
            FeatureKind::Onsets => &self.onsets,
        }
    }

    /// The noiseless test family: envelope on even channels, onsets on odd
    /// channels, both at one lag.
    pub fn single_lag(n_channels: usize, lag: usize) -> Result<Self> {
        if n_channels < 2 {
            return Err(Error::config("single-lag kernels need at least 2 channels"));
        }
        Ok(Self {
            envelope: ResponseKernel::single_lag(n_channels, lag, |c| c % 2 == 0)?,
            onsets: ResponseKernel::single_lag(n_channels, lag, |c| c % 2 == 1)?,
        })
    }

    /// Cohort-wide component shared by every subject.
    pub fn population(n_channels: usize, seed: u64) -> Result<Self> {
        let build = |kind: FeatureKind| {
            let mut rng = rng_for(derive_seed(seed, "population-kernel", &[kind as u64]));
            let topo = topography(n_channels, &mut rng);
            let time = template(kind, 0.0);
            outer(n_channels, &topo, &time)
        };
        Ok(Self {
            envelope: build(FeatureKind::Envelope)?,
            onsets: build(FeatureKind::Onsets)?,
        })
    }

    /// Population kernels blended with a subject-specific component of
    /// relative energy `individuality` (0 gives the population kernel).
    pub fn subject(population: &FeatureKernels, individuality: f64, seed: u64) -> Result<Self> {
        let blend = |kind: FeatureKind| -> Result<ResponseKernel> {
            let pop = population.get(kind);
            let n_channels = pop.n_channels();
            let mut rng = rng_for(derive_seed(seed, "subject-kernel", &[kind as u64]));
            let topo = topography(n_channels, &mut rng);
            let jitter = rng.random_range(-1.5..1.5);
            let time = template(kind, jitter);
            let mut ind = outer(n_channels, &topo, &time)?.weights;
            let n_lags = MAX_KERNEL_LAGS;
            for v in ind.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *v += 0.15 * e / ((n_channels * n_lags) as f64).sqrt();
            }
            let ind = ResponseKernel::new(n_channels, n_lags, ind)?;
            let w = pop
                .weights()
                .iter()
                .zip(ind.weights())
                .map(|(p, i)| p + individuality * i)
                .collect();
            ResponseKernel::new(n_channels, n_lags, w)
        };
        Ok(Self {
            envelope: blend(FeatureKind::Envelope)?,
            onsets: blend(FeatureKind::Onsets)?,
        })
    }
}

fn outer(n_channels: usize, topo: &[f64], time: &[f64]) -> Result<ResponseKernel> {
    let w = topo
        .iter()
        .flat_map(|&a| time.iter().map(move |&t| a * t))
        .collect();
    ResponseKernel::new(n_channels, time.len(), w)
}

/// Smooth random spatial pattern over the channel index.
fn topography(n_channels: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let comps: Vec<(f64, f64)> = (1..=3)
        .map(|m| (rng.sample::<f64, _>(StandardNormal) / m as f64, rng.random_range(0.0..2.0 * PI)))
        .collect();
    (0..n_channels)
        .map(|c| {
            let x = c as f64 / n_channels as f64;
            0.6 + comps
                .iter()
                .enumerate()
                .map(|(m, (a, ph))| a * (2.0 * PI * (m + 1) as f64 * x + ph).cos())
                .sum::<f64>()
        })
        .collect()
}

/// Evoked-response-like time course over 32 lags, shifted by `jitter` samples.
fn template(kind: FeatureKind, jitter: f64) -> Vec<f64> {
    // (amplitude, latency ms, width ms)
    let peaks: [(f64, f64, f64); 3] = match kind {
        FeatureKind::Envelope => [(1.0, 60.0, 20.0), (-0.8, 110.0, 30.0), (0.5, 200.0, 50.0)],
        FeatureKind::Onsets => [(0.8, 70.0, 15.0), (-1.0, 130.0, 30.0), (0.4, 250.0, 60.0)],
    };
    let dt = 1000.0 / 64.0;
    (0..MAX_KERNEL_LAGS)
        .map(|l| {
            let t = (l as f64 - jitter) * dt;
            peaks
                .iter()
                .map(|(a, mu, w)| a * (-0.5 * ((t - mu) / w).powi(2)).exp())
                .sum()
        })
        .collect()
}
