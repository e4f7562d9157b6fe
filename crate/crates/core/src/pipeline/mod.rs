//! Run configuration, on-disk artifacts and the stage commands behind the
//! CLI.
//!
//! Layout of an output directory:
//!
//! ```text
//! out/
//!   cohort/            synthetic recordings and stimuli (synth)
//!   decode/            nt_cache.csv + nt_cache.json sidecar (decode)
//!   predict/           vectors, predictions, inner MAE, report, SHAP, model (predict)
//!   null/              null.csv, null.json (null)
//!   reduce/            reduction.csv (reduce)
//!   manifest.json      config, code version, per-stage content hashes
//!   timings.json       wall-clock seconds per stage
//! ```

mod config;
pub mod manifest;

pub use config::{ReductionConfig, RunConfig};
pub use manifest::{hash_file, hash_tree, RunManifest};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::binio::write_file;
use crate::decoding::cache::{read_nt_csv, read_sidecar, write_nt_csv, write_sidecar, CacheSidecar};
use crate::decoding::{decoders_per_run, enumerate_filtered, run_band, NtTable};
use crate::dsp::BandName;
use crate::eval::io::{json_string, null_csv_string, reduction_csv_string, shap_groups_csv_string};
use crate::eval::{
    data_reduction_sweep, evaluate, permutation_null, shap_linear, EvaluationReport, NullDistribution,
    ReductionGrid,
};
use crate::features::io::{write_vectors, write_vectors_csv};
use crate::features::{assemble_cohort, erf_transform_values, AdjustedNtVector, VectorLayout};
use crate::rng::derive_seed;
use crate::srtmodel::io::{inner_mae_csv_string, predictions_csv_string, write_model};
use crate::srtmodel::{train_at_multiplier, NestedCvPlan, NestedCvResult};
use crate::synth::io::{read_cohort, write_cohort};
use crate::synth::{generate_cohort, Cohort, SnrCondition};
use crate::{Error, Result};

pub const COHORT_DIR: &str = "cohort";
pub const NT_CACHE: &str = "decode/nt_cache.csv";
pub const NT_SIDECAR: &str = "decode/nt_cache.json";

fn stage_timer<T>(out: &Path, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let v = f()?;
    manifest::record_timing(out, stage, t.elapsed().as_secs_f64())?;
    Ok(v)
}

fn put(out: &Path, rel: &str, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<()> {
    write_file(&out.join(rel), bytes)?;
    written.push(PathBuf::from(rel));
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub n_subjects: usize,
    pub n_files: usize,
    pub cohort_hash: String,
}

/// Generates the cohort of `config` into `out/cohort`, replacing an earlier
/// one.
pub fn cmd_synth(config: &RunConfig) -> Result<SynthOutcome> {
    config.validate()?;
    let out = &config.out_dir;
    stage_timer(out, "synth", || {
        let cohort = generate_cohort(&config.cohort, config.master_seed)?;
        let dir = out.join(COHORT_DIR);
        if dir.exists() {
            if !dir.join("cohort.json").exists() {
                return Err(Error::config(format!(
                    "{} exists but does not hold a cohort; refusing to overwrite it",
                    dir.display()
                )));
            }
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let files = write_cohort(&dir, &cohort)?;
        let rel: Vec<PathBuf> = files.iter().map(|f| Path::new(COHORT_DIR).join(f)).collect();
        let mut m = RunManifest::open(out, config)?;
        m.stages.clear();
        m.record(out, "synth", &[], &rel)?;
        Ok(SynthOutcome {
            n_subjects: cohort.subjects.len(),
            n_files: files.len(),
            cohort_hash: hash_tree(&dir)?,
        })
    })
}

/// Reads `out/cohort` and checks it was generated from this config.
pub fn load_cohort(config: &RunConfig) -> Result<Cohort> {
    let dir = config.out_dir.join(COHORT_DIR);
    if !dir.join("cohort.json").exists() {
        return Err(Error::data(format!("no cohort under {}; run `synth` first", dir.display())));
    }
    let cohort = read_cohort(&dir)?;
    if cohort.spec != config.cohort || cohort.master_seed != config.master_seed {
        return Err(Error::config(
            "the cohort on disk was generated with a different seed or cohort config; rerun `synth`",
        ));
    }
    Ok(cohort)
}

#[derive(Debug, Clone)]
pub struct DecodeOutcome {
    pub rows: usize,
    pub n_configs: usize,
    pub decoders_per_run: usize,
    pub bands_computed: Vec<BandName>,
    pub bands_reused: Vec<BandName>,
    /// False when stopped early by `stop_after_bands`.
    pub complete: bool,
}

/// Computes the NT cache band by band. Bands already completed under the
/// same cohort, code version and settings are kept; a cache written under
/// different ones is refused. `stop_after_bands` ends the run after that
/// many newly computed bands, leaving a resumable cache.
pub fn cmd_decode(config: &RunConfig, stop_after_bands: Option<usize>) -> Result<DecodeOutcome> {
    config.validate()?;
    let out = &config.out_dir;
    stage_timer(out, "decode", || {
        let cohort = load_cohort(config)?;
        let cohort_hash = hash_tree(&out.join(COHORT_DIR))?;
        let opts = config.grid_options();
        let mut sidecar = CacheSidecar {
            code_version: crate::CODE_VERSION.to_string(),
            cohort_hash,
            lambda_rel: opts.lambda_rel,
            filter: opts.filter.clone(),
            n_sentences: None,
            story_samples: None,
            complete_bands: Vec::new(),
        };
        let (sidecar_path, cache_path) = (out.join(NT_SIDECAR), out.join(NT_CACHE));
        let mut table = NtTable::new();
        if sidecar_path.exists() {
            let old = read_sidecar(&sidecar_path)?;
            if let Some(why) = old.incompatibility(&sidecar) {
                return Err(Error::config(format!("refusing to reuse {}: {why}", cache_path.display())));
            }
            if cache_path.exists() {
                let mut cached = read_nt_csv(&cache_path)?;
                cached.retain(|k| old.complete_bands.contains(&k.config.band));
                table = cached;
                sidecar.complete_bands = old.complete_bands;
            }
        }
        let configs = enumerate_filtered(&opts.filter);
        let bands_reused = sidecar.complete_bands.clone();
        let mut bands_computed = Vec::new();
        let mut complete = true;
        for band in BandName::ALL.into_iter().filter(|b| opts.filter.accepts_band(*b)) {
            if sidecar.complete_bands.contains(&band) {
                continue;
            }
            if stop_after_bands.is_some_and(|n| bands_computed.len() >= n) {
                complete = false;
                break;
            }
            table.extend(run_band(&cohort, band, &opts)?);
            sidecar.complete_bands.push(band);
            bands_computed.push(band);
            write_nt_csv(&cache_path, &table)?;
            write_sidecar(&sidecar_path, &sidecar)?;
        }
        if bands_computed.is_empty() && !cache_path.exists() {
            write_nt_csv(&cache_path, &table)?;
            write_sidecar(&sidecar_path, &sidecar)?;
        }
        let expected = configs.len() * SnrCondition::ALL.len() * cohort.subjects.len();
        if complete && table.len() != expected {
            return Err(Error::data(format!(
                "NT cache holds {} rows, expected {expected}",
                table.len()
            )));
        }
        let mut m = RunManifest::open(out, config)?;
        m.record(
            out,
            "decode",
            &[PathBuf::from(COHORT_DIR).join("cohort.json")],
            &[PathBuf::from(NT_CACHE)],
        )?;
        Ok(DecodeOutcome {
            rows: table.len(),
            n_configs: configs.len(),
            decoders_per_run: decoders_per_run(&configs),
            bands_computed,
            bands_reused,
            complete,
        })
    })
}

/// Adjusted vectors of every subject from a complete cache.
pub struct StageInputs {
    pub cohort: Cohort,
    pub layout: VectorLayout,
    pub vectors: Vec<AdjustedNtVector>,
    pub srts: Vec<f64>,
}

pub fn load_vectors(config: &RunConfig) -> Result<StageInputs> {
    let out = &config.out_dir;
    let cohort = load_cohort(config)?;
    let cache_path = out.join(NT_CACHE);
    if !cache_path.exists() {
        return Err(Error::data(format!("no NT cache at {}; run `decode` first", cache_path.display())));
    }
    let side = read_sidecar(&out.join(NT_SIDECAR))?;
    let want_hash = hash_tree(&out.join(COHORT_DIR))?;
    if side.cohort_hash != want_hash || side.code_version != crate::CODE_VERSION {
        return Err(Error::config("the NT cache was computed for another cohort or code version; rerun `decode`"));
    }
    if side.filter != config.filter || side.lambda_rel.to_bits() != config.lambda_rel.to_bits() {
        return Err(Error::config("the NT cache was computed with other grid settings; rerun `decode`"));
    }
    let table = read_nt_csv(&cache_path)?;
    let layout = VectorLayout::full().restrict(|c| config.filter.accepts(c))?;
    let ids: Vec<_> = cohort.subjects.iter().map(|s| s.subject_id).collect();
    let vectors = assemble_cohort(&table, &ids, &layout)?;
    let srts = cohort.true_srts();
    Ok(StageInputs {
        cohort,
        layout,
        vectors,
        srts,
    })
}

#[derive(Debug, Clone)]
pub struct PredictOutcome {
    pub result: NestedCvResult,
    pub report: EvaluationReport,
    pub feature_dim: usize,
    pub shap_multiplier: f64,
}

/// Most frequent chosen multiplier; ties go to the smallest.
fn modal_multiplier(result: &NestedCvResult) -> f64 {
    let mut counts: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for f in &result.folds {
        counts.entry(f.chosen_multiplier.to_bits()).or_insert((f.chosen_multiplier, 0)).1 += 1;
    }
    let mut best = (f64::INFINITY, 0);
    for &(m, c) in counts.values() {
        if c > best.1 || (c == best.1 && m < best.0) {
            best = (m, c);
        }
    }
    best.0
}

pub fn cmd_predict(config: &RunConfig) -> Result<PredictOutcome> {
    config.validate()?;
    let out = &config.out_dir;
    stage_timer(out, "predict", || {
        let inputs = load_vectors(config)?;
        let plan = NestedCvPlan::new(&inputs.vectors, &config.sigma_grid()?)?;
        let result = plan.run(&inputs.srts, &config.svr)?;
        let report = evaluate(&inputs.srts, &result.predictions())?;

        let shap_multiplier = modal_multiplier(&result);
        let model = train_at_multiplier(&inputs.vectors, &inputs.srts, shap_multiplier, &config.svr)?;
        let sigma = model.sigma_used.expect("set by train_at_multiplier");
        let x = inputs
            .vectors
            .iter()
            .map(|v| erf_transform_values(&v.values, sigma))
            .collect::<Result<Vec<_>>>()?;
        let shap = shap_linear(&model, &x, &inputs.layout)?;

        let mut written = Vec::new();
        write_vectors(&out.join("predict/vectors.mdvec"), &inputs.layout, &inputs.vectors)?;
        written.push(PathBuf::from("predict/vectors.mdvec"));
        write_vectors_csv(&out.join("predict/vectors.csv"), &inputs.layout, &inputs.vectors)?;
        written.push(PathBuf::from("predict/vectors.csv"));
        put(out, "predict/predictions.csv", predictions_csv_string(&result)?.as_bytes(), &mut written)?;
        put(out, "predict/inner_mae.csv", inner_mae_csv_string(&result.inner)?.as_bytes(), &mut written)?;
        put(out, "predict/report.json", json_string(&report)?.as_bytes(), &mut written)?;
        put(out, "predict/shap_groups.csv", shap_groups_csv_string(&shap)?.as_bytes(), &mut written)?;
        write_model(&out.join("predict/model.mdsvr"), &model)?;
        written.push(PathBuf::from("predict/model.mdsvr"));
        let mut m = RunManifest::open(out, config)?;
        m.record(out, "predict", &[PathBuf::from(NT_CACHE)], &written)?;
        Ok(PredictOutcome {
            result,
            report,
            feature_dim: inputs.layout.len(),
            shap_multiplier,
        })
    })
}

pub fn cmd_null(config: &RunConfig) -> Result<NullDistribution> {
    config.validate()?;
    let out = &config.out_dir;
    stage_timer(out, "null", || {
        let inputs = load_vectors(config)?;
        let plan = NestedCvPlan::new(&inputs.vectors, &config.sigma_grid()?)?;
        let seed = derive_seed(config.master_seed, "null", &[]);
        let dist = permutation_null(&plan, &inputs.srts, &config.svr, config.n_perm, seed)?;
        let mut written = Vec::new();
        put(out, "null/null.csv", null_csv_string(&dist)?.as_bytes(), &mut written)?;
        let summary = serde_json::json!({
            "n_perm": dist.n_perm(),
            "mean": dist.mean,
            "sd": dist.sd,
            "observed_r": dist.observed_r,
            "observed_z": dist.observed_z,
            "two_tailed_p": dist.two_tailed_p,
            "empirical_p": dist.empirical_p,
            "seed": seed,
        });
        put(out, "null/null.json", json_string(&summary)?.as_bytes(), &mut written)?;
        let mut m = RunManifest::open(out, config)?;
        m.record(out, "null", &[PathBuf::from(NT_CACHE)], &written)?;
        Ok(dist)
    })
}

pub fn cmd_reduce(config: &RunConfig) -> Result<Vec<ReductionGrid>> {
    config.validate()?;
    let out = &config.out_dir;
    stage_timer(out, "reduce", || {
        let cohort = load_cohort(config)?;
        let grids = config
            .reduction
            .modes
            .iter()
            .map(|&mode| data_reduction_sweep(&cohort, mode, &config.reduction_options(mode)?))
            .collect::<Result<Vec<_>>>()?;
        let mut written = Vec::new();
        put(out, "reduce/reduction.csv", reduction_csv_string(&grids)?.as_bytes(), &mut written)?;
        put(out, "reduce/reduction.json", json_string(&grids)?.as_bytes(), &mut written)?;
        let mut m = RunManifest::open(out, config)?;
        m.record(out, "reduce", &[PathBuf::from(COHORT_DIR).join("cohort.json")], &written)?;
        Ok(grids)
    })
}

#[derive(Debug, Clone)]
pub struct AllOutcome {
    pub synth: SynthOutcome,
    pub decode: DecodeOutcome,
    pub predict: PredictOutcome,
    pub null: NullDistribution,
}

/// synth, decode, predict and null in sequence. The reduction sweep is
/// much more expensive and runs only through `reduce`.
pub fn cmd_all(config: &RunConfig) -> Result<AllOutcome> {
    let synth = cmd_synth(config)?;
    let decode = cmd_decode(config, None)?;
    let predict = cmd_predict(config)?;
    let null = cmd_null(config)?;
    Ok(AllOutcome {
        synth,
        decode,
        predict,
        null,
    })
}
