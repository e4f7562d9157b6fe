//! Exact SHAP values of a linear model, grouped along each decoder axis.

use std::fmt;

use serde::Serialize;

use crate::decoding::DecoderConfig;
use crate::features::VectorLayout;
use crate::srtmodel::{predict, SvrModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapAxis {
    Window,
    DecoderType,
    Feature,
    Task,
    Band,
}

impl ShapAxis {
    pub const ALL: [ShapAxis; 5] = [
        ShapAxis::Window,
        ShapAxis::DecoderType,
        ShapAxis::Feature,
        ShapAxis::Task,
        ShapAxis::Band,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ShapAxis::Window => "window",
            ShapAxis::DecoderType => "decoder_type",
            ShapAxis::Feature => "feature",
            ShapAxis::Task => "task",
            ShapAxis::Band => "band",
        }
    }

    pub fn level(self, c: &DecoderConfig) -> String {
        match self {
            ShapAxis::Window => c.max_lag.to_string(),
            ShapAxis::DecoderType => c.decoder_type.to_string(),
            ShapAxis::Feature => c.feature.to_string(),
            ShapAxis::Task => c.task.to_string(),
            ShapAxis::Band => c.band.to_string(),
        }
    }
}

impl fmt::Display for ShapAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapGroup {
    pub axis: ShapAxis,
    pub level: String,
    /// Per subject, the summed φ of the group's features.
    pub per_subject: Vec<f64>,
    /// Mean over subjects of `|per_subject|`.
    pub mean_abs_phi: f64,
    /// Sum of `per_subject`.
    pub sum_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapReport {
    /// `subjects × features`.
    pub phi: Vec<Vec<f64>>,
    pub base_value: f64,
    pub predictions: Vec<f64>,
    pub groups: Vec<ShapGroup>,
}

impl ShapReport {
    /// Share of an axis's total mean |φ| carried by each of its levels.
    pub fn shares(&self, axis: ShapAxis) -> Vec<(String, f64)> {
        let groups: Vec<&ShapGroup> = self.groups.iter().filter(|g| g.axis == axis).collect();
        let total: f64 = groups.iter().map(|g| g.mean_abs_phi).sum();
        groups
            .iter()
            .map(|g| (g.level.clone(), if total > 0.0 { g.mean_abs_phi / total } else { 0.0 }))
            .collect()
    }
}

/// `φᵢⱼ = wⱼ (xᵢⱼ − x̄ⱼ)` with `x̄` the mean over the explained rows, so
/// `base + Σⱼ φᵢⱼ` equals the model prediction for every row.
pub fn shap_linear(model: &SvrModel, x: &[Vec<f64>], layout: &VectorLayout) -> Result<ShapReport> {
    let d = model.dim();
    if layout.len() != d {
        return Err(Error::data(format!("layout has {} entries, model {d}", layout.len())));
    }
    if x.is_empty() || x.iter().any(|r| r.len() != d) {
        return Err(Error::data(format!("SHAP rows must be non-empty and of length {d}")));
    }
    let n = x.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let phi: Vec<Vec<f64>> = x
        .iter()
        .map(|r| (0..d).map(|j| model.weights[j] * (r[j] - mean[j])).collect())
        .collect();
    let predictions = x.iter().map(|r| predict(model, r)).collect::<Result<Vec<_>>>()?;
    let base_value = predict(model, &mean)?;

    let mut groups = Vec::new();
    for axis in ShapAxis::ALL {
        let mut levels: Vec<String> = Vec::new();
        let mut of_feature = Vec::with_capacity(d);
        for j in 0..d {
            let level = axis.level(&layout.entry(j).0);
            let k = match levels.iter().position(|l| *l == level) {
                Some(k) => k,
                None => {
                    levels.push(level);
                    levels.len() - 1
                }
            };
            of_feature.push(k);
        }
        let mut sums = vec![vec![0.0; x.len()]; levels.len()];
        for (i, row) in phi.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                sums[of_feature[j]][i] += v;
            }
        }
        for (level, per_subject) in levels.into_iter().zip(sums) {
            groups.push(ShapGroup {
                axis,
                level,
                mean_abs_phi: per_subject.iter().map(|v| v.abs()).sum::<f64>() / n,
                sum_phi: per_subject.iter().sum(),
                per_subject,
            });
        }
    }
    Ok(ShapReport {
        phi,
        base_value,
        predictions,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    fn setup(weights: Vec<f64>) -> (SvrModel, Vec<Vec<f64>>, VectorLayout) {
        let layout = VectorLayout::full();
        let d = layout.len();
        let mut rng = rng_for(3);
        let x: Vec<Vec<f64>> = (0..9).map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let model = SvrModel {
            weights,
            bias: -9.1,
            sigma_used: Some(0.1),
            training_feature_means: (0..d).map(|_| rng.random_range(0.0..1.0)).collect(),
        };
        (model, x, layout)
    }

    #[test]
    fn local_accuracy_and_group_reconciliation() {
        let mut rng = rng_for(4);
        let w: Vec<f64> = (0..3240).map(|_| rng.random_range(-0.01..0.01)).collect();
        let (m, x, layout) = setup(w);
        let r = shap_linear(&m, &x, &layout).unwrap();
        for (i, row) in r.phi.iter().enumerate() {
            let total: f64 = row.iter().sum();
            assert!((r.base_value + total - r.predictions[i]).abs() < 1e-10);
            for axis in ShapAxis::ALL {
                let g: f64 = r.groups.iter().filter(|g| g.axis == axis).map(|g| g.per_subject[i]).sum();
                assert!((g - total).abs() < 1e-10);
            }
        }
        let windows = r.groups.iter().filter(|g| g.axis == ShapAxis::Window).count();
        assert_eq!(windows, 27);
        assert_eq!(r.groups.len(), 27 + 2 + 2 + 2 + 3);
    }

    #[test]
    fn single_weight_owns_its_groups() {
        let mut w = vec![0.0; 3240];
        let layout = VectorLayout::full();
        let target = 1234;
        w[target] = 0.7;
        let (m, x, _) = setup(w);
        let r = shap_linear(&m, &x, &layout).unwrap();
        for (i, row) in r.phi.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if j != target {
                    assert_eq!(*v, 0.0, "row {i} col {j}");
                }
            }
        }
        let config = layout.entry(target).0;
        for axis in ShapAxis::ALL {
            let shares = r.shares(axis);
            let own = axis.level(&config);
            for (level, s) in shares {
                let want = if level == own { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12, "{axis} {level}: {s}");
            }
        }
        assert!(shap_linear(&m, &[vec![0.0; 3]], &layout).is_err());
    }
}
