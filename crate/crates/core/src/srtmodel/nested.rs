//! Nested leave-one-out prediction.
//!
//! For outer fold `h` the steepness candidates are `m · SD_h`, where `SD_h`
//! is the pooled SD of the adjusted vectors of every subject except `h`.
//! Because the model is linear, every SVR fit inside the fold only needs
//! inner products between ERF-transformed vectors. [`NestedCvPlan`] computes
//! those Gram matrices once; they do not depend on the labels, so the same
//! plan serves the observed SRTs and every permutation of them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solver::{minimize, Basis};
use super::{dot, SvrHyper, SvrModel};
use crate::features::{erf_transform_values, pooled_sd, AdjustedNtVector};
use crate::synth::SubjectId;
use crate::{Error, Result};

/// Steepness candidates as multiples of the training-set SD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SigmaGrid(Vec<f64>);

impl SigmaGrid {
    /// `{1/10, 2/10, …, size/10}`.
    pub fn tenths(size: usize) -> Result<Self> {
        Self::new((1..=size).map(|k| k as f64 / 10.0).collect())
    }

    pub fn new(mut multipliers: Vec<f64>) -> Result<Self> {
        if multipliers.is_empty() {
            return Err(Error::config("sigma grid is empty"));
        }
        if multipliers.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::config("sigma multipliers must be positive"));
        }
        multipliers.sort_by(f64::total_cmp);
        multipliers.dedup();
        Ok(Self(multipliers))
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for SigmaGrid {
    fn default() -> Self {
        Self::tenths(10).expect("valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterFold {
    pub subject_id: SubjectId,
    pub behavioral_srt: f64,
    pub predicted_srt: f64,
    pub chosen_multiplier: f64,
    pub chosen_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerMae {
    pub outer_subject: SubjectId,
    pub multiplier: f64,
    pub sigma: f64,
    pub mae: f64,
}

/// Which subjects fed each statistic of one outer fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAudit {
    pub held_out: SubjectId,
    /// Subjects whose vectors set the SD scale.
    pub sd_subjects: Vec<SubjectId>,
    /// Training and mean subjects of the final fit.
    pub training_subjects: Vec<SubjectId>,
    /// `(inner held-out, inner training set)` per inner fold.
    pub inner_folds: Vec<(SubjectId, Vec<SubjectId>)>,
}

impl FoldAudit {
    /// True when the held-out subject shows up nowhere in its own fold.
    pub fn is_clean(&self) -> bool {
        let h = self.held_out;
        !self.sd_subjects.contains(&h)
            && !self.training_subjects.contains(&h)
            && self.inner_folds.iter().all(|(i, t)| *i != h && !t.contains(&h))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedCvResult {
    pub folds: Vec<OuterFold>,
    pub inner: Vec<InnerMae>,
    pub audits: Vec<FoldAudit>,
}

impl NestedCvResult {
    pub fn predictions(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.predicted_srt).collect()
    }

    pub fn behavioral(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.behavioral_srt).collect()
    }
}

struct FoldPlan {
    sd: f64,
    /// One `n × n` Gram per multiplier, row-major.
    grams: Vec<Vec<f64>>,
}

/// Label-independent precomputation for nested LOO over a fixed cohort.
pub struct NestedCvPlan {
    subjects: Vec<SubjectId>,
    grid: SigmaGrid,
    folds: Vec<FoldPlan>,
}

impl NestedCvPlan {
    pub fn new(vectors: &[AdjustedNtVector], grid: &SigmaGrid) -> Result<Self> {
        let n = vectors.len();
        if n < 3 {
            return Err(Error::data(format!("nested LOO needs at least 3 subjects, got {n}")));
        }
        if grid.is_empty() {
            return Err(Error::config("sigma grid is empty"));
        }
        let d = vectors[0].values.len();
        if d == 0 || vectors.iter().any(|v| v.values.len() != d) {
            return Err(Error::data("adjusted vectors must share a nonzero length"));
        }
        if vectors.iter().flat_map(|v| &v.values).any(|x| !x.is_finite()) {
            return Err(Error::data("adjusted vectors contain non-finite values"));
        }
        let folds = (0..n)
            .into_par_iter()
            .map(|h| {
                let sd = pooled_sd(vectors.iter().enumerate().filter(|(i, _)| *i != h).map(|(_, v)| v));
                if !(sd > 0.0) {
                    return Err(Error::numerical(format!(
                        "adjusted vectors without {} have zero spread; the ERF scale is undefined",
                        vectors[h].subject_id
                    )));
                }
                let grams = grid
                    .multipliers()
                    .iter()
                    .map(|m| transformed_gram(vectors, m * sd))
                    .collect::<Result<Vec<_>>>()?;
                Ok(FoldPlan { sd, grams })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            subjects: vectors.iter().map(|v| v.subject_id).collect(),
            grid: grid.clone(),
            folds,
        })
    }

    pub fn subjects(&self) -> &[SubjectId] {
        &self.subjects
    }

    pub fn grid(&self) -> &SigmaGrid {
        &self.grid
    }

    /// Runs the nested procedure for one label vector (in subject order).
    pub fn run(&self, srts: &[f64], hyper: &SvrHyper) -> Result<NestedCvResult> {
        let n = self.subjects.len();
        if srts.len() != n {
            return Err(Error::data(format!("{} SRTs for {n} subjects", srts.len())));
        }
        if srts.iter().any(|y| !y.is_finite()) {
            return Err(Error::data("SRTs must be finite"));
        }
        hyper.validate()?;
        let per_fold = (0..n)
            .into_par_iter()
            .map(|h| self.outer_fold(h, srts, hyper))
            .collect::<Result<Vec<_>>>()?;
        let mut out = NestedCvResult {
            folds: Vec::with_capacity(n),
            inner: Vec::new(),
            audits: Vec::with_capacity(n),
        };
        for (fold, inner, audit) in per_fold {
            out.folds.push(fold);
            out.inner.extend(inner);
            out.audits.push(audit);
        }
        Ok(out)
    }

    fn outer_fold(&self, h: usize, srts: &[f64], hyper: &SvrHyper) -> Result<(OuterFold, Vec<InnerMae>, FoldAudit)> {
        let n = self.subjects.len();
        let plan = &self.folds[h];
        let train: Vec<usize> = (0..n).filter(|&i| i != h).collect();
        let ids = |set: &[usize]| set.iter().map(|&i| self.subjects[i]).collect::<Vec<_>>();
        let mut audit = FoldAudit {
            held_out: self.subjects[h],
            sd_subjects: ids(&train),
            training_subjects: ids(&train),
            inner_folds: Vec::new(),
        };
        let mut inner = Vec::with_capacity(self.grid.len());
        let mut best: Option<(usize, f64)> = None;
        for (k, (&m, gram)) in self.grid.multipliers().iter().zip(&plan.grams).enumerate() {
            let mut abs_err = 0.0;
            for &i in &train {
                let sub: Vec<usize> = train.iter().copied().filter(|&j| j != i).collect();
                if k == 0 {
                    audit.inner_folds.push((self.subjects[i], ids(&sub)));
                }
                let pred = fit_and_predict(gram, n, &sub, i, srts, hyper)
                    .map_err(|e| fold_error(e, self.subjects[h], Some(self.subjects[i])))?;
                abs_err += (srts[i] - pred).abs();
            }
            let mae = abs_err / train.len() as f64;
            inner.push(InnerMae {
                outer_subject: self.subjects[h],
                multiplier: m,
                sigma: m * plan.sd,
                mae,
            });
            // ascending grid, strict improvement: ties keep the smaller σ
            if best.is_none_or(|(_, b)| mae < b) {
                best = Some((k, mae));
            }
        }
        let (k, _) = best.expect("non-empty grid");
        let predicted = fit_and_predict(&plan.grams[k], n, &train, h, srts, hyper)
            .map_err(|e| fold_error(e, self.subjects[h], None))?;
        let m = self.grid.multipliers()[k];
        Ok((
            OuterFold {
                subject_id: self.subjects[h],
                behavioral_srt: srts[h],
                predicted_srt: predicted,
                chosen_multiplier: m,
                chosen_sigma: m * plan.sd,
            },
            inner,
            audit,
        ))
    }
}

fn fold_error(e: Error, outer: SubjectId, inner: Option<SubjectId>) -> Error {
    let what = match inner {
        Some(i) => format!("outer fold {outer}, inner fold {i}"),
        None => format!("outer fold {outer}"),
    };
    e.context(&what)
}

/// Gram of the ERF-transformed vectors after removing their common mean.
/// The shift cancels in every centred kernel and only improves conditioning.
fn transformed_gram(vectors: &[AdjustedNtVector], sigma: f64) -> Result<Vec<f64>> {
    let n = vectors.len();
    let t = vectors
        .iter()
        .map(|v| erf_transform_values(&v.values, sigma))
        .collect::<Result<Vec<_>>>()?;
    let d = t[0].len();
    let mut mean = vec![0.0; d];
    for row in &t {
        mean.iter_mut().zip(row).for_each(|(a, x)| *a += x / n as f64);
    }
    let t: Vec<Vec<f64>> = t
        .into_iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = dot(&t[i], &t[j]);
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
    }
    Ok(g)
}

/// Trains on `train` (features centred on the training mean) and predicts
/// subject `test`, all through the Gram matrix `g` (`n × n`).
fn fit_and_predict(g: &[f64], n: usize, train: &[usize], test: usize, srts: &[f64], hyper: &SvrHyper) -> Result<f64> {
    let p = train.len();
    if p < 2 {
        return Err(Error::data("SVR training needs at least 2 subjects"));
    }
    let at = |i: usize, j: usize| g[i * n + j];
    let row_mean: Vec<f64> = train
        .iter()
        .map(|&i| train.iter().map(|&j| at(i, j)).sum::<f64>() / p as f64)
        .collect();
    let grand = row_mean.iter().sum::<f64>() / p as f64;
    let mut k = vec![0.0; p * p];
    for (a, &i) in train.iter().enumerate() {
        for (b, &j) in train.iter().enumerate() {
            k[a * p + b] = at(i, j) - row_mean[a] - row_mean[b] + grand;
        }
    }
    let y: Vec<f64> = train.iter().map(|&i| srts[i]).collect();
    let fit = minimize(
        &Basis {
            gram: &k,
            rows: &k,
            p,
            n: p,
        },
        &y,
        hyper,
        vec![0.0; p],
        0.0,
    )?;
    let test_mean = train.iter().map(|&j| at(test, j)).sum::<f64>() / p as f64;
    let pred = train
        .iter()
        .enumerate()
        .map(|(a, &i)| fit.coef[a] * (at(i, test) - test_mean - row_mean[a] + grand))
        .sum::<f64>();
    Ok(pred + fit.bias)
}

/// One-shot nested LOO: builds the plan and runs it on `srts`.
pub fn nested_loo_predict(
    vectors: &[AdjustedNtVector],
    srts: &[f64],
    grid: &SigmaGrid,
    hyper: &SvrHyper,
) -> Result<NestedCvResult> {
    NestedCvPlan::new(vectors, grid)?.run(srts, hyper)
}

/// Fits a model on every subject with `σ = multiplier · SD(all vectors)`.
pub fn train_at_multiplier(
    vectors: &[AdjustedNtVector],
    srts: &[f64],
    multiplier: f64,
    hyper: &SvrHyper,
) -> Result<SvrModel> {
    let sd = pooled_sd(vectors);
    if !(sd > 0.0) {
        return Err(Error::numerical("adjusted vectors have zero spread; the ERF scale is undefined"));
    }
    let sigma = multiplier * sd;
    let x = vectors
        .iter()
        .map(|v| erf_transform_values(&v.values, sigma))
        .collect::<Result<Vec<_>>>()?;
    let mut model = super::train_svr(&x, srts, hyper)?;
    model.sigma_used = Some(sigma);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use crate::srtmodel::{predict, train_svr};
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Vectors whose mean tracks a hidden SRT, plus noise.
    fn cohort(n: usize, d: usize, noise: f64, seed: u64) -> (Vec<AdjustedNtVector>, Vec<f64>) {
        let mut rng = rng_for(seed);
        let srts: Vec<f64> = (0..n).map(|_| -9.07 + 0.56 * rng.sample::<f64, _>(StandardNormal)).collect();
        let load: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..1.0)).collect();
        let vectors = srts
            .iter()
            .enumerate()
            .map(|(i, y)| AdjustedNtVector {
                subject_id: SubjectId(i as u32 + 1),
                values: load
                    .iter()
                    .map(|l| -0.05 * l * (y + 9.07) + noise * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            })
            .collect();
        (vectors, srts)
    }

    #[test]
    fn sigma_grid_forms() {
        let g = SigmaGrid::default();
        assert_eq!(g.len(), 10);
        assert_eq!(g.multipliers()[0], 0.1);
        assert_eq!(g.multipliers()[9], 1.0);
        assert!(SigmaGrid::new(vec![]).is_err());
        assert!(SigmaGrid::new(vec![0.0]).is_err());
        assert_eq!(SigmaGrid::new(vec![0.5, 0.2, 0.5]).unwrap().multipliers(), &[0.2, 0.5]);
    }

    #[test]
    fn one_prediction_per_subject_with_clean_audits() {
        let (v, y) = cohort(8, 60, 0.01, 3);
        let r = nested_loo_predict(&v, &y, &SigmaGrid::tenths(4).unwrap(), &SvrHyper::default()).unwrap();
        assert_eq!(r.folds.len(), 8);
        assert_eq!(r.inner.len(), 8 * 4);
        for (f, a) in r.folds.iter().zip(&r.audits) {
            assert!(a.is_clean());
            assert_eq!(a.held_out, f.subject_id);
            assert_eq!(a.inner_folds.len(), 7);
            assert!(a.inner_folds.iter().all(|(_, t)| t.len() == 6));
            // the chosen σ is the inner argmin with ties to the smaller σ
            let rows: Vec<&InnerMae> = r.inner.iter().filter(|m| m.outer_subject == f.subject_id).collect();
            let min = rows.iter().map(|m| m.mae).fold(f64::INFINITY, f64::min);
            let first = rows.iter().find(|m| m.mae == min).unwrap();
            assert_eq!(first.multiplier, f.chosen_multiplier);
        }
    }

    #[test]
    fn single_candidate_matches_explicit_outer_loo() {
        let (v, y) = cohort(6, 40, 0.02, 8);
        let hyper = SvrHyper::default();
        let r = nested_loo_predict(&v, &y, &SigmaGrid::new(vec![0.4]).unwrap(), &hyper).unwrap();
        for (h, fold) in r.folds.iter().enumerate() {
            let rest: Vec<AdjustedNtVector> = v.iter().enumerate().filter(|(i, _)| *i != h).map(|(_, x)| x.clone()).collect();
            let sigma = 0.4 * pooled_sd(&rest);
            assert!((fold.chosen_sigma - sigma).abs() < 1e-15);
            let x: Vec<Vec<f64>> = rest.iter().map(|a| erf_transform_values(&a.values, sigma).unwrap()).collect();
            let ty: Vec<f64> = y.iter().enumerate().filter(|(i, _)| *i != h).map(|(_, t)| *t).collect();
            let model = train_svr(&x, &ty, &hyper).unwrap();
            let p = predict(&model, &erf_transform_values(&v[h].values, sigma).unwrap()).unwrap();
            assert!((p - fold.predicted_srt).abs() < 1e-6, "{p} vs {}", fold.predicted_srt);
        }
    }

    #[test]
    fn strong_signal_is_recovered() {
        let (v, y) = cohort(12, 200, 0.005, 21);
        let r = nested_loo_predict(&v, &y, &SigmaGrid::default(), &SvrHyper::default()).unwrap();
        let p = r.predictions();
        let corr = crate::eval::pearson(&y, &p).unwrap();
        assert!(corr >= 0.9, "r = {corr}");
    }

    #[test]
    fn inner_table_is_reproducible_and_label_reuse_matches() {
        let (v, y) = cohort(7, 30, 0.02, 5);
        let grid = SigmaGrid::tenths(3).unwrap();
        let hyper = SvrHyper::default();
        let a = nested_loo_predict(&v, &y, &grid, &hyper).unwrap();
        let plan = NestedCvPlan::new(&v, &grid).unwrap();
        let b = plan.run(&y, &hyper).unwrap();
        assert_eq!(a, b);
        let mut shuffled = y.clone();
        shuffled.rotate_left(2);
        let c = plan.run(&shuffled, &hyper).unwrap();
        assert_eq!(nested_loo_predict(&v, &shuffled, &grid, &hyper).unwrap(), c);
    }

    #[test]
    fn rejects_tiny_cohorts() {
        let (v, y) = cohort(2, 10, 0.1, 1);
        assert!(nested_loo_predict(&v, &y, &SigmaGrid::default(), &SvrHyper::default()).is_err());
        let (v, y) = cohort(4, 10, 0.1, 1);
        assert!(nested_loo_predict(&v, &y[..3], &SigmaGrid::default(), &SvrHyper::default()).is_err());
    }
}
