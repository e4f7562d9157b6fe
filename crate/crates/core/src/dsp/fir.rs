//! Weighted least-squares design of linear-phase (type I) band-pass FIR filters.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::BandSpec;
use crate::{Error, Result};

/// Number of frequency points, spanning DC to Nyquist, used to verify a design.
pub const MEASUREMENT_GRID_POINTS: usize = 4096;

const MAX_PASSBAND_RIPPLE_DB: f64 = 1.0;
const MIN_STOPBAND_ATTENUATION_DB: f64 = 80.0;

// Transition bands are left almost free: a small weight towards a raised-cosine
// target keeps the normal equations well conditioned.
const TRANSITION_WEIGHT: f64 = 1e-3;
const STOPBAND_WEIGHTS: [f64; 6] = [10.0, 40.0, 160.0, 640.0, 2560.0, 10240.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterMeasurement {
    pub passband_ripple_db: f64,
    pub stopband_attenuation_db: f64,
}

impl FilterMeasurement {
    pub fn meets_spec(&self) -> bool {
        self.passband_ripple_db <= MAX_PASSBAND_RIPPLE_DB
            && self.stopband_attenuation_db >= MIN_STOPBAND_ATTENUATION_DB
    }
}

/// A symmetric FIR band-pass filter of length `order + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    coefficients: Vec<f64>,
    design_rate: f64,
    band: BandSpec,
    stop_low_hz: f64,
    stop_high_hz: f64,
}

impl FirFilter {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn design_rate(&self) -> f64 {
        self.design_rate
    }

    pub fn band(&self) -> &BandSpec {
        &self.band
    }

    /// Stopband edges `(lower, upper)` in Hz; the transition bands lie between
    /// these and the pass band.
    pub fn stop_edges_hz(&self) -> (f64, f64) {
        (self.stop_low_hz, self.stop_high_hz)
    }

    /// Zero-phase amplitude response at `freq_hz`.
    pub fn amplitude(&self, freq_hz: f64) -> f64 {
        let m = self.order() / 2;
        let omega = 2.0 * PI * freq_hz / self.design_rate;
        // A(w) = h[m] + 2 sum_k h[m+k] cos(k w), Clenshaw recurrence on cos(k w)
        let c = &self.coefficients;
        let two_cos = 2.0 * omega.cos();
        let (mut b1, mut b2) = (0.0f64, 0.0f64);
        for k in (1..=m).rev() {
            let b0 = 2.0 * c[m + k] + two_cos * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        c[m] + b1 * omega.cos() - b2
    }

    /// Measures ripple and attenuation on the uniform verification grid.
    pub fn measure(&self) -> FilterMeasurement {
        let nyq = self.design_rate / 2.0;
        let (mut pmax, mut pmin, mut smax) = (f64::MIN, f64::MAX, 0.0f64);
        for i in 0..MEASUREMENT_GRID_POINTS {
            let f = nyq * i as f64 / (MEASUREMENT_GRID_POINTS - 1) as f64;
            let in_pass = f >= self.band.low_hz && f <= self.band.high_hz;
            let in_stop = f <= self.stop_low_hz || f >= self.stop_high_hz;
            if !(in_pass || in_stop) {
                continue;
            }
            let a = self.amplitude(f).abs();
            if in_pass {
                pmax = pmax.max(a);
                pmin = pmin.min(a);
            } else {
                smax = smax.max(a);
            }
        }
        FilterMeasurement {
            passband_ripple_db: 20.0 * (pmax / pmin).log10(),
            stopband_attenuation_db: -20.0 * smax.max(f64::MIN_POSITIVE).log10(),
        }
    }
}

fn stop_edges(band: &BandSpec, rate: f64) -> (f64, f64) {
    let nyq = rate / 2.0;
    let low = band.low_hz / 2.0;
    let high = band.high_hz + (band.high_hz / 4.0).min((nyq - band.high_hz) / 2.0);
    (low, high)
}

struct Segment {
    lo: f64,
    hi: f64,
    weight: f64,
    target: Target,
}

enum Target {
    Zero,
    One,
    /// raised cosine from 0 at `lo` to 1 at `hi` (rising) or the reverse
    Ramp { rising: bool },
}

/// Integral of cos(m w) over [lo, hi].
fn cos_integral(m: usize, lo: f64, hi: f64) -> f64 {
    if m == 0 {
        hi - lo
    } else {
        let m = m as f64;
        ((m * hi).sin() - (m * lo).sin()) / m
    }
}

fn ramp_value(rising: bool, lo: f64, hi: f64, w: f64) -> f64 {
    let t = ((w - lo) / (hi - lo)).clamp(0.0, 1.0);
    let r = 0.5 - 0.5 * (PI * t).cos();
    if rising {
        r
    } else {
        1.0 - r
    }
}

fn solve_weighted_ls(half: usize, segments: &[Segment]) -> Result<Vec<f64>> {
    let n = half + 1;
    // T(m) = sum_b W_b int_b cos(m w) dw for m in 0..=2*half
    let tvals: Vec<f64> = (0..=2 * half)
        .map(|m| {
            segments
                .iter()
                .map(|s| s.weight * cos_integral(m, s.lo, s.hi))
                .sum()
        })
        .collect();
    let q = Mat::<f64>::from_fn(n, n, |k, l| {
        let d = k.abs_diff(l);
        0.5 * (tvals[d] + tvals[k + l])
    });
    let mut p = Mat::<f64>::zeros(n, 1);
    for s in segments {
        match s.target {
            Target::Zero => {}
            Target::One => {
                for k in 0..n {
                    p[(k, 0)] += s.weight * cos_integral(k, s.lo, s.hi);
                }
            }
            Target::Ramp { rising } => {
                // composite Simpson on a fine grid; the ramps are narrow
                let intervals = 4096usize;
                let h = (s.hi - s.lo) / intervals as f64;
                for j in 0..=intervals {
                    let w = s.lo + h * j as f64;
                    let coef = if j == 0 || j == intervals {
                        1.0
                    } else if j % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    let f = coef * h / 3.0 * s.weight * ramp_value(rising, s.lo, s.hi, w);
                    // cos(k w) by recurrence
                    let (c1, two_c) = (w.cos(), 2.0 * w.cos());
                    let (mut prev, mut cur) = (1.0f64, c1);
                    p[(0, 0)] += f;
                    for k in 1..n {
                        p[(k, 0)] += f * cur;
                        let next = two_c * cur - prev;
                        prev = cur;
                        cur = next;
                    }
                }
            }
        }
    }
    let llt = q
        .llt(Side::Lower)
        .map_err(|_| Error::numerical("least-squares normal equations are not positive definite"))?;
    let a = llt.solve(&p);
    Ok((0..n).map(|k| a[(k, 0)]).collect())
}

/// Designs a weighted least-squares linear-phase band-pass filter.
///
/// Stopband weight is raised until the design passes its own verification
/// (≤ 1 dB passband ripple, ≥ 80 dB stopband attenuation); if no weight works
/// at this order the error names the violated measurement.
pub fn design_bandpass_ls(band: BandSpec, order: usize, rate: f64) -> Result<FirFilter> {
    if order == 0 || order % 2 != 0 {
        return Err(Error::config(format!("filter order must be even and positive, got {order}")));
    }
    band.validate(rate)?;
    let (stop_low_hz, stop_high_hz) = stop_edges(&band, rate);
    let to_w = |f: f64| 2.0 * PI * f / rate;
    let half = order / 2;

    let mut last = None;
    for &stop_weight in &STOPBAND_WEIGHTS {
        let segments = [
            Segment { lo: 0.0, hi: to_w(stop_low_hz), weight: stop_weight, target: Target::Zero },
            Segment {
                lo: to_w(stop_low_hz),
                hi: to_w(band.low_hz),
                weight: TRANSITION_WEIGHT,
                target: Target::Ramp { rising: true },
            },
            Segment { lo: to_w(band.low_hz), hi: to_w(band.high_hz), weight: 1.0, target: Target::One },
            Segment {
                lo: to_w(band.high_hz),
                hi: to_w(stop_high_hz),
                weight: TRANSITION_WEIGHT,
                target: Target::Ramp { rising: false },
            },
            Segment { lo: to_w(stop_high_hz), hi: PI, weight: stop_weight, target: Target::Zero },
        ];
        let a = solve_weighted_ls(half, &segments)?;
        let mut coefficients = vec![0.0; order + 1];
        coefficients[half] = a[0];
        for k in 1..=half {
            coefficients[half + k] = a[k] / 2.0;
            coefficients[half - k] = a[k] / 2.0;
        }
        let filter = FirFilter {
            coefficients,
            design_rate: rate,
            band,
            stop_low_hz,
            stop_high_hz,
        };
        let m = filter.measure();
        if m.meets_spec() {
            return Ok(filter);
        }
        let ripple_ok = m.passband_ripple_db <= MAX_PASSBAND_RIPPLE_DB;
        last = Some(m);
        if !ripple_ok {
            // more stopband weight only worsens the passband
            break;
        }
    }
    let m = last.expect("at least one design attempt");
    let what = if m.passband_ripple_db > MAX_PASSBAND_RIPPLE_DB {
        format!("passband ripple {:.3} dB exceeds {MAX_PASSBAND_RIPPLE_DB} dB", m.passband_ripple_db)
    } else {
        format!(
            "stopband attenuation {:.2} dB below {MIN_STOPBAND_ATTENUATION_DB} dB",
            m.stopband_attenuation_db
        )
    };
    Err(Error::numerical(format!(
        "cannot design {} band filter of order {order} at {rate} Hz: {what}",
        band.name
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::BandName;

    fn dft_magnitude(h: &[f64], f: f64, rate: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &c) in h.iter().enumerate() {
            let ph = -2.0 * PI * f * n as f64 / rate;
            re += c * ph.cos();
            im += c * ph.sin();
        }
        (re * re + im * im).sqrt()
    }

    #[test]
    fn canonical_bands_meet_spec_at_order_2000() {
        for name in BandName::ALL {
            let f = design_bandpass_ls(name.spec(), 2000, 64.0).unwrap();
            let m = f.measure();
            assert!(m.meets_spec(), "{name}: {m:?}");
            assert_eq!(f.coefficients().len(), 2001);
        }
    }

    #[test]
    fn coefficients_symmetric() {
        let f = design_bandpass_ls(BandName::Theta.spec(), 2000, 64.0).unwrap();
        let c = f.coefficients();
        for k in 0..=2000 {
            assert!((c[k] - c[2000 - k]).abs() < 1e-9);
        }
    }

    #[test]
    fn center_gain_agrees_with_dense_dft() {
        for name in BandName::ALL {
            let f = design_bandpass_ls(name.spec(), 2000, 64.0).unwrap();
            let fc = f.band().center_hz();
            let dft = dft_magnitude(f.coefficients(), fc, 64.0);
            let amp = f.amplitude(fc).abs();
            assert!((dft - amp).abs() < 1e-9, "{name}: dft {dft} vs amplitude {amp}");
            assert!((20.0 * dft.log10()).abs() <= 1.0);
        }
    }

    #[test]
    fn deterministic() {
        let a = design_bandpass_ls(BandName::Delta.spec(), 2000, 64.0).unwrap();
        let b = design_bandpass_ls(BandName::Delta.spec(), 2000, 64.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unsatisfiable_order_names_measurement() {
        let err = design_bandpass_ls(BandName::Delta.spec(), 40, 64.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("attenuation") || msg.contains("ripple"), "{msg}");
        assert!(design_bandpass_ls(BandName::Delta.spec(), 2001, 64.0).is_err());
        assert!(design_bandpass_ls(BandName::Broadband.spec(), 2000, 50.0).is_err());
    }
}
