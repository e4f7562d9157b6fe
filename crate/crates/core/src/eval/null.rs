//! Label-permutation null for the nested pipeline.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::{fisher_z, pearson};
use crate::rng::{derive_seed, rng_for};
use crate::srtmodel::{NestedCvPlan, SvrHyper};
use crate::{Error, Result};

pub const MIN_PERMUTATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullDistribution {
    /// Correlation of each run's predictions with the true SRTs. Index 0 is
    /// the identity permutation, i.e. the observed pipeline.
    pub r_values: Vec<f64>,
    pub z_values: Vec<f64>,
    /// Gaussian fit over the shuffled runs (indices 1..).
    pub mean: f64,
    pub sd: f64,
    pub observed_r: f64,
    pub observed_z: f64,
    /// Two-tailed p of the observed z under the fitted Gaussian.
    pub two_tailed_p: f64,
    /// `(1 + #{|z_i − mean| ≥ |z_obs − mean|}) / n_perm` over the shuffles.
    pub empirical_p: f64,
}

impl NullDistribution {
    pub fn n_perm(&self) -> usize {
        self.z_values.len()
    }

    /// Whether the observed z lies outside the central `1 − alpha` mass of
    /// the fitted Gaussian.
    pub fn observed_outside(&self, alpha: f64) -> bool {
        self.two_tailed_p < alpha
    }
}

/// The label order of permutation `index` (0 is the identity).
pub fn permutation(n: usize, seed: u64, index: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if index > 0 {
        order.shuffle(&mut rng_for(derive_seed(seed, "permutation", &[index as u64])));
    }
    order
}

/// Reruns the whole nested pipeline on `n_perm − 1` shuffles of `srts`
/// (plus the identity) and correlates each prediction set with the true
/// SRTs.
pub fn permutation_null(
    plan: &NestedCvPlan,
    srts: &[f64],
    hyper: &SvrHyper,
    n_perm: usize,
    seed: u64,
) -> Result<NullDistribution> {
    if n_perm < MIN_PERMUTATIONS {
        return Err(Error::config(format!(
            "permutation null needs at least {MIN_PERMUTATIONS} permutations, got {n_perm}"
        )));
    }
    let n = srts.len();
    let r_values = (0..n_perm)
        .into_par_iter()
        .map(|k| {
            let labels: Vec<f64> = permutation(n, seed, k).into_iter().map(|i| srts[i]).collect();
            let res = plan.run(&labels, hyper)?;
            pearson(srts, &res.predictions())
        })
        .collect::<Vec<_>>()
        .into_iter()
        .enumerate()
        .map(|(k, r)| r.map_err(|e| e.context(&format!("permutation {k}"))))
        .collect::<Result<Vec<f64>>>()?;
    let z_values = r_values
        .iter()
        .enumerate()
        .map(|(k, &r)| fisher_z(r).map_err(|e| e.context(&format!("permutation {k}"))))
        .collect::<Result<Vec<f64>>>()?;
    let shuffles = &z_values[1..];
    let m = shuffles.len() as f64;
    let mean = shuffles.iter().sum::<f64>() / m;
    let sd = (shuffles.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(Error::numerical("permutation null has zero spread"));
    }
    let observed_z = z_values[0];
    let dev = (observed_z - mean).abs();
    let two_tailed_p = libm::erfc(dev / sd / std::f64::consts::SQRT_2);
    let extreme = shuffles.iter().filter(|z| (*z - mean).abs() >= dev).count();
    Ok(NullDistribution {
        observed_r: r_values[0],
        r_values,
        mean,
        sd,
        observed_z,
        two_tailed_p,
        empirical_p: (1 + extreme) as f64 / n_perm as f64,
        z_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::AdjustedNtVector;
    use crate::srtmodel::SigmaGrid;
    use crate::synth::SubjectId;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn cohort(n: usize, signal: f64, seed: u64) -> (Vec<AdjustedNtVector>, Vec<f64>) {
        let mut rng = rng_for(seed);
        let y: Vec<f64> = (0..n).map(|_| -9.0 + 0.6 * rng.sample::<f64, _>(StandardNormal)).collect();
        let v = y
            .iter()
            .enumerate()
            .map(|(i, t)| AdjustedNtVector {
                subject_id: SubjectId(i as u32 + 1),
                values: (0..20)
                    .map(|_| -signal * (t + 9.0) + 0.05 * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            })
            .collect();
        (v, y)
    }

    #[test]
    fn identity_first_and_deterministic() {
        let (v, y) = cohort(12, 0.1, 1);
        let grid = SigmaGrid::tenths(2).unwrap();
        let plan = NestedCvPlan::new(&v, &grid).unwrap();
        let h = SvrHyper::default();
        let a = permutation_null(&plan, &y, &h, 100, 7).unwrap();
        let observed = pearson(&y, &plan.run(&y, &h).unwrap().predictions()).unwrap();
        assert_eq!(a.observed_r, observed);
        assert_eq!(a.n_perm(), 100);
        assert_eq!(a, permutation_null(&plan, &y, &h, 100, 7).unwrap());
        assert!(a.mean.abs() < 0.25, "{}", a.mean);
        assert!(a.observed_outside(0.05), "p = {}", a.two_tailed_p);
        assert!(permutation_null(&plan, &y, &h, 99, 7).is_err());
    }

    #[test]
    fn permutations_are_permutations() {
        let p0 = permutation(10, 3, 0);
        assert_eq!(p0, (0..10).collect::<Vec<_>>());
        let mut p = permutation(10, 3, 4);
        assert_ne!(p, p0);
        p.sort();
        assert_eq!(p, p0);
    }
}
