//! Statistical and bookkeeping properties of the evaluation layer.

use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use multidecoder::decoding::{ConfigFilter, GridOptions};
use multidecoder::dsp::BandName;
use multidecoder::eval::{data_reduction_sweep, nrmse, permutation_null, shap_linear, ReductionMode, ReductionOptions, ShapAxis};
use multidecoder::features::{AdjustedNtVector, VectorLayout};
use multidecoder::rng::rng_for;
use multidecoder::srtmodel::{NestedCvPlan, SigmaGrid, SvrHyper, SvrModel};
use multidecoder::synth::{generate_cohort, CohortSpec, SubjectId};

#[test]
fn null_cohorts_rarely_look_significant() {
    let mut significant = 0;
    for cohort in 0..20u64 {
        let mut rng = rng_for(900 + cohort);
        let vectors: Vec<AdjustedNtVector> = (0..12)
            .map(|i| AdjustedNtVector {
                subject_id: SubjectId(i + 1),
                values: (0..30).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            })
            .collect();
        let srts: Vec<f64> = (0..12).map(|_| -9.0 + 0.6 * rng.sample::<f64, _>(StandardNormal)).collect();
        let plan = NestedCvPlan::new(&vectors, &SigmaGrid::tenths(3).unwrap()).unwrap();
        let null = permutation_null(&plan, &srts, &SvrHyper::default(), 100, cohort).unwrap();
        significant += (null.two_tailed_p < 0.1) as usize;
    }
    assert!(significant <= 3, "{significant} of 20 null cohorts gave p < 0.1");
}

fn random_model(dim: usize, seed: u64) -> (SvrModel, Vec<Vec<f64>>) {
    let mut rng = rng_for(seed);
    let model = SvrModel {
        weights: (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        bias: rng.sample(StandardNormal),
        sigma_used: None,
        training_feature_means: (0..dim).map(|_| rng.random::<f64>()).collect(),
    };
    let x = (0..6).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    (model, x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn shap_partitions_sum_to_total(seed in 0u64..1000, parts in 1usize..12) {
        let layout = VectorLayout::full();
        let (model, x) = random_model(layout.len(), seed);
        let shap = shap_linear(&model, &x, &layout).unwrap();
        for (i, phi) in shap.phi.iter().enumerate() {
            let total: f64 = phi.iter().sum();
            for axis in ShapAxis::ALL {
                let s: f64 = shap.groups.iter().filter(|g| g.axis == axis).map(|g| g.per_subject[i]).sum();
                prop_assert!((s - total).abs() < 1e-10);
            }
            // An arbitrary partition of the indices.
            let mut sums = vec![0.0; parts];
            for (j, v) in phi.iter().enumerate() {
                sums[(j * 7919 + seed as usize) % parts] += v;
            }
            prop_assert!((sums.iter().sum::<f64>() - total).abs() < 1e-10);
        }
    }

    #[test]
    fn nrmse_is_zero_only_for_exact_predictions(y in prop::collection::vec(-20.0f64..0.0, 3..12), k in 0usize..12, dy in 1e-6f64..1.0) {
        prop_assume!(y.iter().any(|v| *v != y[0]));
        prop_assert_eq!(nrmse(&y, &y).unwrap(), 0.0);
        let mut p = y.clone();
        let k = k % y.len();
        p[k] += dy;
        prop_assert!(nrmse(&y, &p).unwrap() > 0.0);
    }
}

#[test]
fn reduction_cells_reproduce_from_their_parameters() {
    let spec = CohortSpec {
        n_subjects: 4,
        n_channels: 4,
        story_s: 40.0,
        n_sentences: 10,
        ..CohortSpec::default()
    };
    let cohort = generate_cohort(&spec, 5).unwrap();
    let opts = ReductionOptions {
        grid: GridOptions {
            filter: ConfigFilter {
                bands: vec![BandName::Theta],
                windows: vec![5],
                ..Default::default()
            },
            ..Default::default()
        },
        sigma_grid: SigmaGrid::tenths(3).unwrap(),
        values: Some(vec![10, 4]),
        ..Default::default()
    };
    let grid = data_reduction_sweep(&cohort, ReductionMode::Sentences, &opts).unwrap();
    assert_eq!(grid.cells.len(), 6);
    let again = data_reduction_sweep(&cohort, ReductionMode::Sentences, &opts).unwrap();
    assert_eq!(grid, again);
    for cell in &grid.cells {
        assert_eq!(cell.master_seed, 5);
        assert_eq!(cell.n_sentences, Some(cell.value));
        let regenerated = generate_cohort(&spec, cell.master_seed).unwrap();
        let single = ReductionOptions {
            values: Some(vec![cell.value]),
            decoder_sets: vec![cell.decoder_set],
            ..opts.clone()
        };
        let one = data_reduction_sweep(&regenerated, ReductionMode::Sentences, &single).unwrap();
        assert_eq!(&one.cells[0], cell);
    }
}
