use faer::Mat;
use serde::{Deserialize, Serialize};

use super::DecoderConfig;
use crate::dsp::TimeSeries;
use crate::linalg;
use crate::synth::{EegRecording, RecordingTag, SnrCondition};
use crate::{Error, Result};

/// Time-lagged copy of a recording: row `i` holds, for the sample
/// `t = rows[i]`, every channel at `t + lag` for lags `0..=max_lag`.
///
/// Columns are lag-major (`lag * n_channels + channel`), so the design for a
/// shorter window is a leading block of the design for a longer one.
#[derive(Debug, Clone)]
pub struct LaggedDesign {
    matrix: Mat<f64>,
    n_channels: usize,
    max_lag: usize,
    rows: Vec<usize>,
    sources: Vec<RecordingTag>,
    silence_mask: Option<Vec<bool>>,
}

impl LaggedDesign {
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn lag_offsets(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.max_lag
    }

    /// Sample index (in the source recording) that each row predicts.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// The recording the first rows come from.
    pub fn source(&self) -> RecordingTag {
        self.sources[0]
    }

    /// Every recording that contributed rows, in row order.
    pub fn sources(&self) -> &[RecordingTag] {
        &self.sources
    }

    pub fn column(&self, channel: usize, lag: usize) -> usize {
        lag * self.n_channels + channel
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.matrix[(row, col)]
    }

    pub fn matrix(&self) -> faer::MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    pub fn silence_mask(&self) -> Option<&[bool]> {
        self.silence_mask.as_deref()
    }

    /// Attaches the source-length silence mask, resampled to the design rows.
    pub fn with_silence_mask(mut self, mask: &[bool]) -> Result<Self> {
        let last = self.rows.last().copied().unwrap_or(0);
        if mask.len() <= last {
            return Err(Error::data("silence mask shorter than the design's source recording"));
        }
        self.silence_mask = Some(self.rows.iter().map(|&t| mask[t]).collect());
        Ok(self)
    }

    /// Target samples aligned with the design rows. Accepts either a series
    /// already aligned with the rows or one over the whole source recording.
    pub fn aligned_target(&self, target: &[f64]) -> Result<Vec<f64>> {
        if target.len() == self.n_rows() {
            return Ok(target.to_vec());
        }
        let last = self.rows.last().copied().unwrap_or(0);
        if self.sources.len() > 1 || target.len() <= last {
            return Err(Error::data(format!(
                "target has {} samples, which matches neither the {} design rows nor the source recording",
                target.len(),
                self.n_rows()
            )));
        }
        Ok(self.rows.iter().map(|&t| target[t]).collect())
    }
}

/// Lagged design over every sample whose full lag context exists; the last
/// `max_lag` samples are dropped.
pub fn lag_design(eeg: &EegRecording, max_lag: usize) -> Result<LaggedDesign> {
    let n = eeg.n_samples();
    if n < max_lag + 2 {
        return Err(Error::data(format!(
            "recording of {n} samples is too short for max lag {max_lag}"
        )));
    }
    let rows: Vec<usize> = (0..n - max_lag).collect();
    lag_design_rows(eeg, max_lag, &rows)
}

/// Lagged design restricted to the given sample indices.
pub fn lag_design_rows(eeg: &EegRecording, max_lag: usize, rows: &[usize]) -> Result<LaggedDesign> {
    let n = eeg.n_samples();
    if let Some(&t) = rows.iter().find(|&&t| t + max_lag >= n) {
        return Err(Error::data(format!(
            "row {t} lacks lag context up to {max_lag} in a {n}-sample recording"
        )));
    }
    let c = eeg.n_channels();
    let matrix = Mat::from_fn(rows.len(), c * (max_lag + 1), |i, col| {
        let (lag, ch) = (col / c, col % c);
        eeg.channel(ch)[rows[i] + lag]
    });
    Ok(LaggedDesign {
        matrix,
        n_channels: c,
        max_lag,
        rows: rows.to_vec(),
        sources: vec![eeg.tag()],
        silence_mask: None,
    })
}

/// Stacks designs with equal column layout row-wise (pooling recordings).
pub fn pool_designs(designs: &[LaggedDesign]) -> Result<LaggedDesign> {
    let first = designs.first().ok_or_else(|| Error::data("no designs to pool"))?;
    if designs
        .iter()
        .any(|d| d.n_channels != first.n_channels || d.max_lag != first.max_lag)
    {
        return Err(Error::data("pooled designs disagree in channels or lags"));
    }
    let n: usize = designs.iter().map(LaggedDesign::n_rows).sum();
    let mut matrix = Mat::zeros(n, first.n_cols());
    let mut at = 0;
    for d in designs {
        matrix
            .as_mut()
            .submatrix_mut(at, 0, d.n_rows(), d.n_cols())
            .copy_from(d.matrix.as_ref());
        at += d.n_rows();
    }
    let masks: Option<Vec<bool>> = designs
        .iter()
        .map(|d| d.silence_mask.clone())
        .collect::<Option<Vec<_>>>()
        .map(|m| m.concat());
    Ok(LaggedDesign {
        matrix,
        n_channels: first.n_channels,
        max_lag: first.max_lag,
        rows: designs.iter().flat_map(|d| d.rows.iter().copied()).collect(),
        sources: designs.iter().flat_map(|d| d.sources.iter().copied()).collect(),
        silence_mask: masks,
    })
}

/// A trained backward decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderWeights {
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub n_channels: usize,
    pub max_lag: usize,
    pub config: Option<DecoderConfig>,
    pub condition: Option<SnrCondition>,
}

impl DecoderWeights {
    pub fn zeros(n_channels: usize, max_lag: usize) -> Self {
        Self {
            weights: vec![0.0; n_channels * (max_lag + 1)],
            lambda: 0.0,
            n_channels,
            max_lag,
            config: None,
            condition: None,
        }
    }
}

/// `λ = lambda_rel · trace(XᵀX) / n_columns`.
pub fn relative_lambda(trace: f64, n_cols: usize, lambda_rel: f64) -> f64 {
    lambda_rel * trace / n_cols as f64
}

/// Ridge regression `w = (XᵀX + λI)⁻¹ Xᵀy` with `λ` relative to the mean
/// diagonal of `XᵀX`.
pub fn train_ridge(design: &LaggedDesign, target: &TimeSeries, lambda_rel: f64) -> Result<DecoderWeights> {
    if !(lambda_rel >= 0.0 && lambda_rel.is_finite()) {
        return Err(Error::config(format!("lambda_rel must be ≥ 0, got {lambda_rel}")));
    }
    let y = design.aligned_target(target.samples())?;
    let mut g = Mat::zeros(design.n_cols(), design.n_cols());
    linalg::add_gram(&mut g, design.matrix());
    let trace: f64 = (0..g.nrows()).map(|i| g[(i, i)]).sum();
    let lambda = relative_lambda(trace, design.n_cols(), lambda_rel);
    train_ridge_gram(design, g, &y, lambda)
}

/// Ridge regression with an absolute `λ`.
pub fn train_ridge_lambda(design: &LaggedDesign, target_rows: &[f64], lambda: f64) -> Result<DecoderWeights> {
    let mut g = Mat::zeros(design.n_cols(), design.n_cols());
    linalg::add_gram(&mut g, design.matrix());
    train_ridge_gram(design, g, target_rows, lambda)
}

fn train_ridge_gram(design: &LaggedDesign, mut g: Mat<f64>, y: &[f64], lambda: f64) -> Result<DecoderWeights> {
    if y.len() != design.n_rows() {
        return Err(Error::data(format!(
            "target has {} samples but the design has {} rows",
            y.len(),
            design.n_rows()
        )));
    }
    let d = design.n_cols();
    let ym = Mat::from_fn(y.len(), 1, |i, _| y[i]);
    let mut b = Mat::zeros(d, 1);
    linalg::add_cross(&mut b, design.matrix(), ym.as_ref());
    for i in 0..d {
        g[(i, i)] += lambda;
    }
    let l = linalg::cholesky(g).map_err(|_| {
        if lambda == 0.0 {
            Error::numerical("normal equations are singular at λ = 0; use lambda_rel > 0")
        } else {
            Error::numerical(format!("ridge system not positive definite at λ = {lambda}"))
        }
    })?;
    let bv: Vec<f64> = (0..d).map(|i| b[(i, 0)]).collect();
    let weights = linalg::solve_leading(l.as_ref(), d, &bv);
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::numerical("ridge solution is not finite"));
    }
    Ok(DecoderWeights {
        weights,
        lambda,
        n_channels: design.n_channels(),
        max_lag: design.max_lag(),
        config: None,
        condition: None,
    })
}

/// `ŷ = X w`, carrying the design's silence mask.
pub fn reconstruct(weights: &DecoderWeights, design: &LaggedDesign) -> Result<TimeSeries> {
    if weights.weights.len() != design.n_cols() || weights.n_channels != design.n_channels() {
        return Err(Error::data(format!(
            "decoder has {} weights for {} channels; design has {} columns for {} channels",
            weights.weights.len(),
            weights.n_channels,
            design.n_cols(),
            design.n_channels()
        )));
    }
    let w = Mat::from_fn(weights.weights.len(), 1, |i, _| weights.weights[i]);
    let y = linalg::mul(design.matrix(), w.as_ref());
    let samples = (0..y.nrows()).map(|i| y[(i, 0)]).collect();
    TimeSeries::new(samples, crate::dsp::ANALYSIS_RATE_HZ)?
        .with_optional_mask(design.silence_mask().map(<[bool]>::to_vec))
}

/// Running sums sufficient for a Pearson correlation; they add across
/// disjoint sample sets.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PredictionMoments {
    pub n: f64,
    pub sum_p: f64,
    pub sum_pp: f64,
    pub sum_py: f64,
    pub sum_y: f64,
    pub sum_yy: f64,
}

impl PredictionMoments {
    pub fn push(&mut self, p: f64, y: f64) {
        self.n += 1.0;
        self.sum_p += p;
        self.sum_pp += p * p;
        self.sum_py += p * y;
        self.sum_y += y;
        self.sum_yy += y * y;
    }

    pub fn add(&mut self, o: &PredictionMoments) {
        self.n += o.n;
        self.sum_p += o.sum_p;
        self.sum_pp += o.sum_pp;
        self.sum_py += o.sum_py;
        self.sum_y += o.sum_y;
        self.sum_yy += o.sum_yy;
    }

    pub fn correlation(&self) -> Result<f64> {
        if self.n < 2.0 {
            return Err(Error::data("correlation needs at least 2 unmasked samples"));
        }
        let cov = self.n * self.sum_py - self.sum_p * self.sum_y;
        let vp = self.n * self.sum_pp - self.sum_p * self.sum_p;
        let vy = self.n * self.sum_yy - self.sum_y * self.sum_y;
        let scale_p = self.n * self.sum_pp;
        let scale_y = self.n * self.sum_yy;
        if !(vp > 1e-13 * scale_p && vy > 1e-13 * scale_y) || vp <= 0.0 || vy <= 0.0 {
            return Err(Error::data("zero variance: correlation undefined"));
        }
        Ok((cov / (vp.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
    }
}

/// Neural tracking: Pearson correlation between reconstruction and actual
/// feature over samples not marked silent in either series.
pub fn neural_tracking(reconstructed: &TimeSeries, actual: &TimeSeries) -> Result<f64> {
    if reconstructed.len() != actual.len() {
        return Err(Error::data(format!(
            "reconstruction has {} samples, feature has {}",
            reconstructed.len(),
            actual.len()
        )));
    }
    let mask = match (reconstructed.silence_mask(), actual.silence_mask()) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::data("reconstruction and feature silence masks differ"))
        }
        (Some(a), _) | (None, Some(a)) => Some(a),
        (None, None) => None,
    };
    let mut m = PredictionMoments::default();
    for (i, (&p, &y)) in reconstructed.samples().iter().zip(actual.samples()).enumerate() {
        if mask.is_some_and(|m| m[i]) {
            continue;
        }
        m.push(p, y);
    }
    m.correlation()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use crate::synth::{SubjectId, Task};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn tag() -> RecordingTag {
        RecordingTag {
            subject_id: SubjectId(0),
            task: Task::Story,
            condition: None,
        }
    }

    fn random_eeg(channels: usize, samples: usize, seed: u64) -> EegRecording {
        let mut rng = rng_for(seed);
        let data = (0..channels * samples).map(|_| rng.sample(StandardNormal)).collect();
        EegRecording::new(tag(), channels, 64.0, data).unwrap()
    }

    fn ts(v: Vec<f64>) -> TimeSeries {
        TimeSeries::new(v, 64.0).unwrap()
    }

    #[test]
    fn design_shapes_and_alignment() {
        let eeg = random_eeg(2, 50, 1);
        let d0 = lag_design(&eeg, 0).unwrap();
        assert_eq!((d0.n_rows(), d0.n_cols()), (50, 2));
        for t in 0..50 {
            assert_eq!(d0.value(t, 1), eeg.channel(1)[t]);
        }
        let d5 = lag_design(&eeg, 5).unwrap();
        assert_eq!((d5.n_rows(), d5.n_cols()), (45, 12));
        assert_eq!(d5.value(10, d5.column(1, 3)), eeg.channel(1)[13]);
        assert!(lag_design(&random_eeg(2, 6, 1), 5).is_err());
        assert!(lag_design_rows(&eeg, 5, &[45]).is_err());
    }

    // 3-sample system X=[[1,0],[0,1],[1,1]], y=[1,2,3], λ=1:
    // XᵀX + I = [[3,1],[1,3]], Xᵀy = [4,5] → w = [7/8, 11/8].
    #[test]
    fn hand_normal_equation_example() {
        let eeg = EegRecording::new(tag(), 2, 64.0, vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let d = lag_design(&eeg, 0).unwrap();
        let w = train_ridge_lambda(&d, &[1.0, 2.0, 3.0], 1.0).unwrap();
        assert!((w.weights[0] - 0.875).abs() < 1e-10);
        assert!((w.weights[1] - 1.375).abs() < 1e-10);
    }

    #[test]
    fn zero_lambda_equals_least_squares() {
        let eeg = random_eeg(4, 50, 2);
        let d = lag_design(&eeg, 0).unwrap();
        let truth = [0.5, -1.0, 2.0, 0.25];
        let y: Vec<f64> = (0..50)
            .map(|t| (0..4).map(|c| truth[c] * d.value(t, c)).sum::<f64>())
            .collect();
        let w = train_ridge(&d, &ts(y), 0.0).unwrap();
        for (a, b) in w.weights.iter().zip(truth) {
            assert!((a - b).abs() <= 1e-8 * b.abs());
        }
    }

    #[test]
    fn shrinkage_is_monotone() {
        let eeg = random_eeg(3, 80, 3);
        let d = lag_design(&eeg, 2).unwrap();
        let y = ts((0..d.n_rows()).map(|i| d.value(i, 0) + 0.3 * d.value(i, 4)).collect());
        let norms: Vec<f64> = [0.01, 1.0, 1e6]
            .iter()
            .map(|&l| train_ridge(&d, &y, l).unwrap().weights.iter().map(|w| w * w).sum::<f64>().sqrt())
            .collect();
        assert!(norms[0] > norms[1] && norms[1] > norms[2]);
        assert!(norms[2] < 1e-5);
    }

    #[test]
    fn singular_at_zero_lambda_advises() {
        let mut data = vec![0.0; 40];
        for t in 0..20 {
            data[t] = t as f64;
            data[20 + t] = 2.0 * t as f64;
        }
        let eeg = EegRecording::new(tag(), 2, 64.0, data).unwrap();
        let d = lag_design(&eeg, 0).unwrap();
        let err = train_ridge(&d, &ts(vec![1.0; 20]), 0.0).unwrap_err();
        assert!(err.to_string().contains("lambda_rel > 0"), "{err}");
        assert!(train_ridge(&d, &ts(vec![1.0; 20]), 0.1).is_ok());
    }

    #[test]
    fn ridge_gradient_vanishes() {
        let eeg = random_eeg(3, 120, 4);
        let d = lag_design(&eeg, 4).unwrap();
        let mut rng = rng_for(9);
        let y: Vec<f64> = (0..d.n_rows()).map(|_| rng.sample(StandardNormal)).collect();
        let w = train_ridge(&d, &ts(y.clone()), 0.1).unwrap();
        let x = d.matrix();
        let k = d.n_cols();
        let xty: Vec<f64> = (0..k).map(|j| (0..d.n_rows()).map(|i| x[(i, j)] * y[i]).sum()).collect();
        let xw: Vec<f64> = (0..d.n_rows()).map(|i| (0..k).map(|j| x[(i, j)] * w.weights[j]).sum()).collect();
        let grad: f64 = (0..k)
            .map(|j| {
                let g = (0..d.n_rows()).map(|i| x[(i, j)] * xw[i]).sum::<f64>() + w.lambda * w.weights[j] - xty[j];
                g * g
            })
            .sum::<f64>()
            .sqrt();
        let scale = xty.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(grad <= 1e-8 * scale, "{grad} vs {scale}");
    }

    #[test]
    fn reconstruction_is_linear() {
        let eeg = random_eeg(2, 40, 5);
        let d = lag_design(&eeg, 3).unwrap();
        let z = reconstruct(&DecoderWeights::zeros(2, 3), &d).unwrap();
        assert!(z.samples().iter().all(|&v| v == 0.0));
        let mut w1 = DecoderWeights::zeros(2, 3);
        let mut w2 = DecoderWeights::zeros(2, 3);
        for i in 0..8 {
            w1.weights[i] = i as f64 - 3.0;
            w2.weights[i] = (i * i) as f64 * 0.1;
        }
        let mut w12 = w1.clone();
        for i in 0..8 {
            w12.weights[i] += w2.weights[i];
        }
        let (a, b, c) = (
            reconstruct(&w1, &d).unwrap(),
            reconstruct(&w2, &d).unwrap(),
            reconstruct(&w12, &d).unwrap(),
        );
        for i in 0..d.n_rows() {
            assert!((a.samples()[i] + b.samples()[i] - c.samples()[i]).abs() < 1e-12);
        }
        assert!(reconstruct(&DecoderWeights::zeros(2, 2), &d).is_err());
    }

    #[test]
    fn tracking_basics() {
        let x: Vec<f64> = (0..100).map(|i| ((i * 37) % 17) as f64).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((neural_tracking(&ts(x.clone()), &ts(x.clone())).unwrap() - 1.0).abs() < 1e-12);
        assert!((neural_tracking(&ts(x.clone()), &ts(neg)).unwrap() + 1.0).abs() < 1e-12);
        assert!(neural_tracking(&ts(x.clone()), &ts(vec![1.0; 100])).is_err());
        // affine invariance
        let a: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        let y: Vec<f64> = (0..100).map(|i| ((i * 11) % 13) as f64).collect();
        let r1 = neural_tracking(&ts(x.clone()), &ts(y.clone())).unwrap();
        let r2 = neural_tracking(&ts(a), &ts(y.iter().map(|v| 0.5 * v + 7.0).collect())).unwrap();
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn tracking_skips_masked_samples() {
        let x = ts(vec![1.0, 2.0, 3.0, 100.0]).with_mask(vec![false, false, false, true]).unwrap();
        let y = ts(vec![2.0, 4.0, 6.0, -50.0]);
        assert!((neural_tracking(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let one = ts(vec![1.0, 2.0]).with_mask(vec![false, true]).unwrap();
        assert!(neural_tracking(&one, &ts(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn white_noise_pair_is_uncorrelated() {
        let mut rng = rng_for(77);
        let a: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(neural_tracking(&ts(a), &ts(b)).unwrap().abs() < 0.03);
    }
}
