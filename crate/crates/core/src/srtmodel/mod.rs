//! Linear support-vector regression from ERF-adjusted NT vectors to SRTs,
//! with nested leave-one-out selection of the ERF steepness.
//!
//! The loss is the squared ε-insensitive loss with a ridge penalty,
//! `½‖w‖² + C Σ max(0, |yᵢ − w·x̃ᵢ − b| − ε)²`, where `x̃` are features
//! centred on the training means. It is C¹ and convex, and is minimized by
//! L-BFGS from zero.

pub mod io;
mod nested;
mod solver;

pub use nested::{
    nested_loo_predict, train_at_multiplier, FoldAudit, InnerMae, NestedCvPlan, NestedCvResult, OuterFold, SigmaGrid,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};
use solver::{minimize, Basis};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvrHyper {
    pub c_reg: f64,
    /// Half-width of the insensitive tube, in dB.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Stop when the gradient norm falls below `tol · max(1, ‖g₀‖)`.
    pub tol: f64,
}

impl Default for SvrHyper {
    fn default() -> Self {
        Self {
            c_reg: 1.0,
            epsilon: 0.1,
            max_iter: 5000,
            tol: 1e-8,
        }
    }
}

impl SvrHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_reg > 0.0 && self.c_reg.is_finite()) {
            return Err(Error::config(format!("svr.c_reg must be positive, got {}", self.c_reg)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("svr.epsilon must be ≥ 0, got {}", self.epsilon)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config(format!("svr.tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::config("svr.max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// A trained linear model over centred features.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub sigma_used: Option<f64>,
    pub training_feature_means: Vec<f64>,
}

impl SvrModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

/// Objective value and exact gradient `(∂w, ∂b)` at `(weights, bias)` for
/// already centred rows `x`.
pub fn svr_objective(weights: &[f64], bias: f64, x: &[Vec<f64>], y: &[f64], hyper: &SvrHyper) -> Result<(f64, Vec<f64>, f64)> {
    check_shapes(x, y)?;
    if x[0].len() != weights.len() {
        return Err(Error::data("weight length does not match the feature dimension"));
    }
    let mut grad = weights.to_vec();
    let mut gb = 0.0;
    let mut data = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let r = yi - dot(weights, row) - bias;
        let s = r.signum() * (r.abs() - hyper.epsilon).max(0.0);
        data += s * s;
        grad.iter_mut().zip(row).for_each(|(g, v)| *g -= 2.0 * hyper.c_reg * s * v);
        gb -= 2.0 * hyper.c_reg * s;
    }
    Ok((0.5 * dot(weights, weights) + hyper.c_reg * data, grad, gb))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_shapes(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::data(format!("{} feature rows for {} targets", x.len(), y.len())));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::data("feature rows must share a nonzero dimension"));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::data("features and targets must be finite"));
    }
    Ok(())
}

pub fn column_means(x: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; x[0].len()];
    for row in x {
        m.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    let n = x.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// Trains from zero weights and zero bias.
pub fn train_svr(x: &[Vec<f64>], y: &[f64], hyper: &SvrHyper) -> Result<SvrModel> {
    train_svr_from(x, y, hyper, None)
}

/// Trains from an arbitrary start `(w₀, b₀)` in centred-feature space.
pub fn train_svr_from(x: &[Vec<f64>], y: &[f64], hyper: &SvrHyper, start: Option<(&[f64], f64)>) -> Result<SvrModel> {
    hyper.validate()?;
    check_shapes(x, y)?;
    if x.len() < 2 {
        return Err(Error::data("SVR training needs at least 2 subjects"));
    }
    let means = column_means(x);
    let centred: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| v - m).collect())
        .collect();
    let mut basis_vecs: Vec<&[f64]> = centred.iter().map(Vec::as_slice).collect();
    let (mut coef, bias) = (vec![0.0; x.len()], start.map_or(0.0, |s| s.1));
    if let Some((w0, _)) = start {
        if w0.len() != means.len() {
            return Err(Error::data("start weights do not match the feature dimension"));
        }
        basis_vecs.push(w0);
        coef.push(1.0);
    }
    let p = basis_vecs.len();
    let n = x.len();
    let mut gram = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let v = dot(basis_vecs[i], basis_vecs[j]);
            gram[i * p + j] = v;
            gram[j * p + i] = v;
        }
    }
    let rows = gram[..n * p].to_vec();
    let fit = minimize(&Basis { gram: &gram, rows: &rows, p, n }, y, hyper, coef, bias)?;
    let mut weights = vec![0.0; means.len()];
    for (c, v) in fit.coef.iter().zip(&basis_vecs) {
        weights.iter_mut().zip(v.iter()).for_each(|(w, x)| *w += c * x);
    }
    Ok(SvrModel {
        weights,
        bias: fit.bias,
        sigma_used: None,
        training_feature_means: means,
    })
}

/// `w · (v − means) + b`.
pub fn predict(model: &SvrModel, v: &[f64]) -> Result<f64> {
    if v.len() != model.dim() {
        return Err(Error::data(format!(
            "vector of length {} for a model of dimension {}",
            v.len(),
            model.dim()
        )));
    }
    Ok(model
        .weights
        .iter()
        .zip(v.iter().zip(&model.training_feature_means))
        .map(|(w, (x, m))| w * (x - m))
        .sum::<f64>()
        + model.bias)
}

/// Mean absolute error.
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.is_empty() || y.len() != y_hat.len() {
        return Err(Error::data(format!("MAE of {} targets and {} predictions", y.len(), y_hat.len())));
    }
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}
