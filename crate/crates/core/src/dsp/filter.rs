use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{FirFilter, TimeSeries};
use crate::{Error, Result};

/// How a zero-phase FIR filter sees samples beyond either end of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    /// Pad by half the filter order with odd reflection about each end sample,
    /// filter, then trim back to the input length.
    #[default]
    Reflect,
    /// Treat the input as one period of a periodic signal (circular filtering).
    /// Filtering then commutes exactly with circular shifts.
    Periodic,
}

/// A designed filter bound to an edge mode, reusable across many signals.
#[derive(Debug, Clone)]
pub struct BandFilterPlan {
    filter: FirFilter,
    edge: EdgeMode,
}

impl BandFilterPlan {
    pub fn new(filter: FirFilter, edge: EdgeMode) -> Self {
        Self { filter, edge }
    }

    pub fn filter(&self) -> &FirFilter {
        &self.filter
    }

    pub fn edge(&self) -> EdgeMode {
        self.edge
    }

    /// Filters a raw sample slice assumed to be at the filter's design rate.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let order = self.filter.order();
        if x.len() <= order {
            return Err(Error::data(format!(
                "signal of {} samples is too short for a filter of order {order}",
                x.len()
            )));
        }
        let half = order / 2;
        match self.edge {
            EdgeMode::Periodic => Ok(circular_centered(x, self.filter.coefficients(), x.len())),
            EdgeMode::Reflect => {
                let n = x.len();
                let mut padded = Vec::with_capacity(n + 2 * half);
                padded.extend((1..=half).rev().map(|k| 2.0 * x[0] - x[k]));
                padded.extend_from_slice(x);
                padded.extend((1..=half).map(|k| 2.0 * x[n - 1] - x[n - 1 - k]));
                // a transform length that leaves the kept span free of wrap-around
                let fft_len = (padded.len() + 2 * half).next_power_of_two();
                let mut buf = padded;
                buf.resize(fft_len, 0.0);
                let y = circular_centered(&buf, self.filter.coefficients(), fft_len);
                Ok(y[half..half + n].to_vec())
            }
        }
    }
}

/// Circular convolution with a symmetric kernel centered at index 0.
fn circular_centered(x: &[f64], taps: &[f64], len: usize) -> Vec<f64> {
    let half = (taps.len() - 1) / 2;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);

    let mut kernel = vec![Complex64::new(0.0, 0.0); len];
    for (i, &h) in taps.iter().enumerate() {
        let j = (i as isize - half as isize).rem_euclid(len as isize) as usize;
        kernel[j].re += h;
    }
    fwd.process(&mut kernel);

    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    for (b, k) in buf.iter_mut().zip(&kernel) {
        // the centered symmetric kernel has a real spectrum
        *b *= k.re;
    }
    inv.process(&mut buf);
    let scale = 1.0 / len as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Applies a linear-phase FIR filter with exact group-delay compensation.
pub fn filter_zero_phase(x: &TimeSeries, filter: &FirFilter, edge: EdgeMode) -> Result<TimeSeries> {
    if (x.rate() - filter.design_rate()).abs() > 1e-9 * filter.design_rate() {
        return Err(Error::data(format!(
            "signal rate {} Hz does not match filter design rate {} Hz",
            x.rate(),
            filter.design_rate()
        )));
    }
    let y = BandFilterPlan::new(filter.clone(), edge).apply(x.samples())?;
    x.map_samples(y)
}

/// First-order Butterworth high-pass (bilinear transform) run forward then
/// backward, which gives zero phase and a squared magnitude response.
pub fn highpass_zero_phase(x: &[f64], cutoff_hz: f64, rate: f64) -> Result<Vec<f64>> {
    if !(cutoff_hz > 0.0 && cutoff_hz < rate / 2.0) {
        return Err(Error::config(format!(
            "high-pass cutoff {cutoff_hz} Hz invalid at {rate} Hz sampling"
        )));
    }
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let k = (PI * cutoff_hz / rate).tan();
    let b0 = 1.0 / (1.0 + k);
    let a1 = (k - 1.0) / (k + 1.0);
    let pass = |input: &mut Vec<f64>| {
        // start from the steady state of a constant equal to the first sample
        let mut prev_x = input[0];
        let mut prev_y = 0.0;
        for v in input.iter_mut() {
            let y = b0 * (*v - prev_x) - a1 * prev_y;
            prev_x = *v;
            prev_y = y;
            *v = y;
        }
    };
    let mut y = x.to_vec();
    pass(&mut y);
    y.reverse();
    pass(&mut y);
    y.reverse();
    Ok(y)
}

const MAX_STAGE_FACTOR: usize = 16;
const KAISER_BETA: f64 = 8.6;
const TAPS_PER_FACTOR: usize = 10;

/// Splits an integer decimation ratio into stages of at most 16 (first-fit
/// decreasing over its prime factors), largest stage first.
fn decimation_stages(ratio: usize) -> Result<Vec<usize>> {
    let mut primes = Vec::new();
    let mut r = ratio;
    let mut p = 2;
    while r > 1 {
        while r % p == 0 {
            primes.push(p);
            r /= p;
        }
        p += 1;
    }
    primes.sort_unstable_by(|a, b| b.cmp(a));
    let mut stages: Vec<usize> = Vec::new();
    for p in primes {
        if p > MAX_STAGE_FACTOR {
            return Err(Error::config(format!(
                "decimation ratio {ratio} has prime factor {p} above {MAX_STAGE_FACTOR}"
            )));
        }
        match stages.iter_mut().find(|s| **s * p <= MAX_STAGE_FACTOR) {
            Some(s) => *s *= p,
            None => stages.push(p),
        }
    }
    stages.sort_unstable_by(|a, b| b.cmp(a));
    Ok(stages)
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc low-pass for decimation by `factor`, normalized to unit DC gain.
fn antialias_taps(factor: usize) -> Vec<f64> {
    let half = TAPS_PER_FACTOR * factor;
    let cutoff = 0.45 / factor as f64; // cycles per input sample
    let denom = bessel_i0(KAISER_BETA);
    let mut taps: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let t = i as f64 - half as f64;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let u = t / half as f64;
            sinc * bessel_i0(KAISER_BETA * (1.0 - u * u).max(0.0).sqrt()) / denom
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|v| *v /= s);
    taps
}

fn decimate(x: &[f64], factor: usize) -> Result<Vec<f64>> {
    let taps = antialias_taps(factor);
    let half = (taps.len() - 1) / 2;
    let n = x.len();
    if n <= half {
        return Err(Error::data(format!(
            "signal of {n} samples too short to decimate by {factor}"
        )));
    }
    let at = |i: isize| -> f64 {
        if i < 0 {
            2.0 * x[0] - x[(-i) as usize]
        } else if i as usize >= n {
            let k = i as usize - (n - 1);
            2.0 * x[n - 1] - x[n - 1 - k]
        } else {
            x[i as usize]
        }
    };
    let out_len = n / factor;
    Ok((0..out_len)
        .map(|m| {
            let c = (m * factor) as isize;
            taps.iter()
                .enumerate()
                .map(|(j, &h)| h * at(c + j as isize - half as isize))
                .sum()
        })
        .collect())
}

/// Anti-alias filters and decimates to `target_rate`, which must divide the
/// input rate. Output length is `floor(len * target / rate)`.
pub fn resample(x: &TimeSeries, target_rate: f64) -> Result<TimeSeries> {
    if !(target_rate > 0.0) {
        return Err(Error::config(format!("target rate must be positive, got {target_rate}")));
    }
    let ratio_f = x.rate() / target_rate;
    let ratio = ratio_f.round();
    if ratio < 1.0 || (ratio_f - ratio).abs() > 1e-9 * ratio_f {
        return Err(Error::config(format!(
            "cannot resample {} Hz to {target_rate} Hz: ratio is not an integer",
            x.rate()
        )));
    }
    let ratio = ratio as usize;
    let mut y = x.samples().to_vec();
    for factor in decimation_stages(ratio)? {
        y = decimate(&y, factor)?;
    }
    let mask = x.silence_mask().map(|m| {
        (0..y.len()).map(|i| m[i * ratio]).collect::<Vec<bool>>()
    });
    TimeSeries::new(y, target_rate)?.with_optional_mask(mask)
}
