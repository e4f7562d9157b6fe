//! Evaluation of predicted SRTs: correlation, dB differences, NRMSE, the
//! permutation null, linear SHAP and the data-reduction harness.

pub mod io;
mod null;
mod reduction;
mod shap;

pub use null::{permutation_null, NullDistribution, MIN_PERMUTATIONS};
pub use reduction::{
    data_reduction_sweep, standard_sweep_values, DecoderSet, ReductionCell, ReductionGrid, ReductionMode,
    ReductionOptions, FULL_STORY_MINUTES,
};
pub use shap::{shap_linear, ShapAxis, ShapGroup, ShapReport};

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// One row of the published cross-study comparison, shipped as constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub n: u32,
    pub study: &'static str,
    pub mean_srt: Option<f64>,
    pub sd_srt: f64,
    pub correlation: Option<f64>,
    pub median_db_diff: Option<f64>,
    pub sd_db_diff: Option<f64>,
    pub nrmse: Option<f64>,
}

const fn row(
    n: u32,
    study: &'static str,
    mean_srt: Option<f64>,
    sd_srt: f64,
    correlation: Option<f64>,
    median_db_diff: Option<f64>,
    sd_db_diff: Option<f64>,
    nrmse: Option<f64>,
) -> ReferenceRow {
    ReferenceRow {
        n,
        study,
        mean_srt,
        sd_srt,
        correlation,
        median_db_diff,
        sd_db_diff,
        nrmse,
    }
}

/// Published metrics of earlier EEG-based SRT predictors and of this method.
/// The last row is the multi-decoder method on its 39-subject dataset.
pub const REFERENCE_TABLE: [ReferenceRow; 6] = [
    row(24, "Vanthornhout et al. 2018", Some(-7.6), 1.48, Some(0.69), Some(1.7), Some(3.17), Some(0.86)),
    row(19, "Lesenfants et al. 2019", None, 0.95, None, None, None, None),
    row(18, "Muncke et al. 2022", None, 1.2, None, None, None, None),
    row(20, "Accou et al. 2023", Some(-8.73), 0.83, Some(0.59), Some(3.64), Some(1.68), Some(1.26)),
    row(22, "Borges et al. 2025", Some(-5.34), 0.6, None, Some(0.38), Some(1.45), Some(0.52)),
    row(39, "multi-decoder", Some(-9.07), 0.56, Some(0.65), Some(0.29), Some(0.91), Some(0.19)),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub pearson_r: f64,
    /// Two-tailed p of `r` under the t distribution with `n − 2` dof.
    pub p_value: f64,
    pub median_abs_diff_db: f64,
    /// Sample SD (n − 1) of the absolute differences.
    pub sd_abs_diff_db: f64,
    pub max_abs_diff_db: f64,
    pub nrmse: f64,
    pub n_subjects: usize,
    pub reference_table: Vec<ReferenceRow>,
}

fn check_pair(y: &[f64], y_hat: &[f64], min: usize) -> Result<()> {
    if y.len() != y_hat.len() || y.len() < min {
        return Err(Error::data(format!(
            "need two equal-length series of at least {min}, got {} and {}",
            y.len(),
            y_hat.len()
        )));
    }
    if y.iter().chain(y_hat).any(|v| !v.is_finite()) {
        return Err(Error::data("series contain non-finite values"));
    }
    Ok(())
}

/// Pearson correlation; zero variance in either series is an error.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::numerical("correlation undefined: a series has zero variance"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn correlation_p(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let dof = (n - 2) as f64;
    let t = r * (dof / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// RMSE over the range of the behavioral values.
pub fn nrmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat, 1)?;
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi > lo) {
        return Err(Error::data("NRMSE undefined: behavioral values have zero range"));
    }
    let mse = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt() / (hi - lo))
}

/// `atanh(r)` for `|r| < 1`, exactly odd in `r`.
pub fn fisher_z(r: f64) -> Result<f64> {
    if !(r.abs() < 1.0) {
        return Err(Error::numerical(format!("Fisher z undefined for r = {r}")));
    }
    Ok(r.signum() * r.abs().atanh())
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn evaluate(behavioral: &[f64], predicted: &[f64]) -> Result<EvaluationReport> {
    check_pair(behavioral, predicted, 3)?;
    let r = pearson(behavioral, predicted)?;
    let mut diffs: Vec<f64> = behavioral.iter().zip(predicted).map(|(a, b)| (a - b).abs()).collect();
    diffs.sort_by(f64::total_cmp);
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(EvaluationReport {
        pearson_r: r,
        p_value: correlation_p(r, diffs.len()),
        median_abs_diff_db: median(&diffs),
        sd_abs_diff_db: sd,
        max_abs_diff_db: *diffs.last().expect("non-empty"),
        nrmse: nrmse(behavioral, predicted)?,
        n_subjects: diffs.len(),
        reference_table: REFERENCE_TABLE.to_vec(),
    })
}
