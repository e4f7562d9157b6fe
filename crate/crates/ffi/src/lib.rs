//! C ABI over the `multidecoder` library.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns an
//! [`MdStatus`]; on failure [`md_last_error_message`] describes the error
//! for the calling thread. Panics are caught and reported as
//! [`MdStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use multidecoder::eval::{evaluate, fisher_z, nrmse, EvaluationReport};
use multidecoder::features::erf_transform_values;
use multidecoder::pipeline::{cmd_all, cmd_decode, cmd_predict, cmd_synth, RunConfig};
use multidecoder::srtmodel::io::{read_model, write_model};
use multidecoder::srtmodel::{predict, train_svr, SvrHyper, SvrModel};
use multidecoder::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdStatus {
    Ok = 0,
    NullArgument = 1,
    Config = 2,
    Data = 3,
    Numerical = 4,
    InvalidUtf8 = 5,
    Panic = 6,
}

impl From<&Error> for MdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => MdStatus::Config,
            Error::Numerical(_) => MdStatus::Numerical,
            Error::Data(_) | Error::Io { .. } => MdStatus::Data,
        }
    }
}

/// Opaque run configuration.
pub struct MdConfig(RunConfig);

/// Opaque evaluation report.
pub struct MdReport(EvaluationReport);

/// Opaque linear SRT model.
pub struct MdModel(SvrModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn guard(f: impl FnOnce() -> Result<(), (MdStatus, String)>) -> MdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MdStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MdStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (MdStatus, String) {
    (MdStatus::from(&e), e.to_string())
}

fn null_err(name: &str) -> (MdStatus, String) {
    (MdStatus::NullArgument, format!("{name} is null"))
}

unsafe fn slice<'a>(p: *const f64, n: usize, name: &str) -> Result<&'a [f64], (MdStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null_err(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn string(p: *const c_char, name: &str) -> Result<String, (MdStatus, String)> {
    if p.is_null() {
        return Err(null_err(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (MdStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, v: T, name: &str) -> Result<(), (MdStatus, String)> {
    if out.is_null() {
        return Err(null_err(name));
    }
    out.write(v);
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn md_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version string (static storage).
#[no_mangle]
pub extern "C" fn md_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version literal"),
    };
    VERSION.as_ptr()
}

/// The default configuration.
#[no_mangle]
pub extern "C" fn md_config_new_default() -> *mut MdConfig {
    Box::into_raw(Box::new(MdConfig(RunConfig::default())))
}

/// Parses a JSON configuration; fields left out take their defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn md_config_from_json(json: *const c_char, out: *mut *mut MdConfig) -> MdStatus {
    guard(|| {
        let text = string(json, "json")?;
        let c = RunConfig::from_json(&text, "config").map_err(lib_err)?;
        c.validate().map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(MdConfig(c))), "out")
    })
}

/// # Safety
/// `config` must come from this library and `dir` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn md_config_set_out_dir(config: *mut MdConfig, dir: *const c_char) -> MdStatus {
    guard(|| {
        let c = config.as_mut().ok_or_else(|| null_err("config"))?;
        c.0.out_dir = PathBuf::from(string(dir, "dir")?);
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn md_config_set_seed(config: *mut MdConfig, seed: u64) -> MdStatus {
    guard(|| {
        config.as_mut().ok_or_else(|| null_err("config"))?.0.master_seed = seed;
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn md_config_free(config: *mut MdConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

unsafe fn config_ref<'a>(config: *const MdConfig) -> Result<&'a RunConfig, (MdStatus, String)> {
    config.as_ref().map(|c| &c.0).ok_or_else(|| null_err("config"))
}

/// Generates the cohort into the configured output directory.
///
/// # Safety
/// `config` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn md_run_synth(config: *const MdConfig) -> MdStatus {
    guard(|| cmd_synth(config_ref(config)?).map(|_| ()).map_err(lib_err))
}

/// Fills the NT cache; writes the number of rows to `rows` when non-null.
///
/// # Safety
/// `config` must come from this library; `rows` may be null.
#[no_mangle]
pub unsafe extern "C" fn md_run_decode(config: *const MdConfig, rows: *mut usize) -> MdStatus {
    guard(|| {
        let d = cmd_decode(config_ref(config)?, None).map_err(lib_err)?;
        if !rows.is_null() {
            rows.write(d.rows);
        }
        Ok(())
    })
}

/// Nested prediction and evaluation from an existing cache.
///
/// # Safety
/// `config` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn md_run_predict(config: *const MdConfig, out: *mut *mut MdReport) -> MdStatus {
    guard(|| {
        let p = cmd_predict(config_ref(config)?).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(MdReport(p.report))), "out")
    })
}

/// synth, decode, predict and null; returns the prediction report.
///
/// # Safety
/// `config` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn md_run_all(config: *const MdConfig, out: *mut *mut MdReport) -> MdStatus {
    guard(|| {
        let a = cmd_all(config_ref(config)?).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(MdReport(a.predict.report))), "out")
    })
}

/// Evaluates predictions against behavioral SRTs (`n ≥ 3`).
///
/// # Safety
/// `behavioral` and `predicted` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn md_evaluate(
    behavioral: *const f64,
    predicted: *const f64,
    n: usize,
    out: *mut *mut MdReport,
) -> MdStatus {
    guard(|| {
        let y = slice(behavioral, n, "behavioral")?;
        let p = slice(predicted, n, "predicted")?;
        let r = evaluate(y, p).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(MdReport(r))), "out")
    })
}

/// Reads the report's metrics; any output pointer may be null.
///
/// # Safety
/// `report` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn md_report_metrics(
    report: *const MdReport,
    pearson_r: *mut f64,
    p_value: *mut f64,
    nrmse: *mut f64,
    median_abs_diff_db: *mut f64,
    n_subjects: *mut usize,
) -> MdStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null_err("report"))?.0;
        for (dst, v) in [
            (pearson_r, r.pearson_r),
            (p_value, r.p_value),
            (nrmse, r.nrmse),
            (median_abs_diff_db, r.median_abs_diff_db),
        ] {
            if !dst.is_null() {
                dst.write(v);
            }
        }
        if !n_subjects.is_null() {
            n_subjects.write(r.n_subjects);
        }
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn md_report_free(report: *mut MdReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Root-mean-square error over the range of `y`.
///
/// # Safety
/// `y` and `y_hat` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn md_nrmse(y: *const f64, y_hat: *const f64, n: usize, out: *mut f64) -> MdStatus {
    guard(|| {
        let v = nrmse(slice(y, n, "y")?, slice(y_hat, n, "y_hat")?).map_err(lib_err)?;
        write_out(out, v, "out")
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn md_fisher_z(r: f64, out: *mut f64) -> MdStatus {
    guard(|| write_out(out, fisher_z(r).map_err(lib_err)?, "out"))
}

/// Elementwise ERF transform of `n` values into `out`.
///
/// # Safety
/// `values` and `out` must each point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn md_erf_transform(values: *const f64, n: usize, sigma: f64, out: *mut f64) -> MdStatus {
    guard(|| {
        let v = erf_transform_values(slice(values, n, "values")?, sigma).map_err(lib_err)?;
        if n > 0 && out.is_null() {
            return Err(null_err("out"));
        }
        if n > 0 {
            ptr::copy_nonoverlapping(v.as_ptr(), out, n);
        }
        Ok(())
    })
}

/// Trains a linear SVR on `n_rows × dim` row-major features.
///
/// # Safety
/// `x` must point to `n_rows * dim` doubles, `y` to `n_rows`, and `out`
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn md_model_train(
    x: *const f64,
    n_rows: usize,
    dim: usize,
    y: *const f64,
    c_reg: f64,
    epsilon: f64,
    out: *mut *mut MdModel,
) -> MdStatus {
    guard(|| {
        let flat = slice(x, n_rows.saturating_mul(dim), "x")?;
        let rows: Vec<Vec<f64>> = flat.chunks(dim.max(1)).map(<[f64]>::to_vec).collect();
        let hyper = SvrHyper {
            c_reg,
            epsilon,
            ..SvrHyper::default()
        };
        let m = train_svr(&rows, slice(y, n_rows, "y")?, &hyper).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(MdModel(m))), "out")
    })
}

/// # Safety
/// `model` must come from this library and `v` point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn md_model_predict(model: *const MdModel, v: *const f64, dim: usize, out: *mut f64) -> MdStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null_err("model"))?.0;
        write_out(out, predict(m, slice(v, dim, "v")?).map_err(lib_err)?, "out")
    })
}

/// # Safety
/// `model` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn md_model_dim(model: *const MdModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dim())
}

/// Writes the model in the MDSVR1 format.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn md_model_save(model: *const MdModel, path: *const c_char) -> MdStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null_err("model"))?.0;
        write_model(&PathBuf::from(string(path, "path")?), m).map_err(lib_err)
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn md_model_load(path: *const c_char, out: *mut *mut MdModel) -> MdStatus {
    guard(|| {
        let m = read_model(&PathBuf::from(string(path, "path")?)).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(MdModel(m))), "out")
    })
}

/// # Safety
/// `model` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn md_model_free(model: *mut MdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
