use std::ffi::{CStr, CString};
use std::ptr;

use multidecoder_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(md_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn model_round_trip_through_handles() {
    let n = 30;
    let dim = 3;
    let truth = [0.5, -1.0, 2.0];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let row = [(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos(), (i % 7) as f64 / 7.0];
        y.push(1.5 + row.iter().zip(truth).map(|(a, b)| a * b).sum::<f64>());
        x.extend_from_slice(&row);
    }
    let mut model = ptr::null_mut();
    let s = unsafe { md_model_train(x.as_ptr(), n, dim, y.as_ptr(), 1e6, 0.0, &mut model) };
    assert_eq!(s, MdStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { md_model_dim(model) }, dim);

    let mut p = 0.0;
    let s = unsafe { md_model_predict(model, x.as_ptr(), dim, &mut p) };
    assert_eq!(s, MdStatus::Ok);
    assert!((p - y[0]).abs() < 1e-3, "{p} vs {}", y[0]);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.mdsvr").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { md_model_save(model, path.as_ptr()) }, MdStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { md_model_load(path.as_ptr(), &mut loaded) }, MdStatus::Ok);
    let mut q = 0.0;
    unsafe { md_model_predict(loaded, x.as_ptr(), dim, &mut q) };
    assert_eq!(p.to_bits(), q.to_bits());

    let s = unsafe { md_model_predict(model, x.as_ptr(), dim - 1, &mut q) };
    assert_eq!(s, MdStatus::Data);
    assert!(!last_error().is_empty());
    unsafe {
        md_model_free(model);
        md_model_free(loaded);
    }
}

#[test]
fn null_arguments_are_reported() {
    let mut out = 0.0;
    assert_eq!(unsafe { md_nrmse(ptr::null(), ptr::null(), 3, &mut out) }, MdStatus::NullArgument);
    assert!(last_error().contains("null"));
    assert_eq!(unsafe { md_fisher_z(0.5, ptr::null_mut()) }, MdStatus::NullArgument);
    assert_eq!(unsafe { md_model_dim(ptr::null()) }, 0);
    unsafe {
        md_model_free(ptr::null_mut());
        md_report_free(ptr::null_mut());
        md_config_free(ptr::null_mut());
    }
}

#[test]
fn metrics_match_library() {
    let y = [1.0, 2.0, 3.0, 4.0];
    let p = [1.5, 1.5, 3.5, 3.5];
    let mut v = 0.0;
    assert_eq!(unsafe { md_nrmse(y.as_ptr(), p.as_ptr(), 4, &mut v) }, MdStatus::Ok);
    assert!((v - 0.5 / 3.0).abs() < 1e-15);
    assert!(last_error().is_empty());

    let mut z = 0.0;
    unsafe { md_fisher_z(0.647, &mut z) };
    assert!((z - 0.770121336622171777).abs() < 1e-12);
    assert_eq!(unsafe { md_fisher_z(2.0, &mut z) }, MdStatus::Numerical);

    let mut report = ptr::null_mut();
    assert_eq!(unsafe { md_evaluate(y.as_ptr(), p.as_ptr(), 4, &mut report) }, MdStatus::Ok);
    let (mut r, mut n) = (0.0, 0usize);
    let s = unsafe { md_report_metrics(report, &mut r, ptr::null_mut(), &mut v, ptr::null_mut(), &mut n) };
    assert_eq!(s, MdStatus::Ok);
    assert_eq!(n, 4);
    assert!((r - 0.894427190999916).abs() < 1e-12);
    unsafe { md_report_free(report) };

    let vals = [0.0, 1.0, -1.0];
    let mut out = [9.0; 3];
    assert_eq!(unsafe { md_erf_transform(vals.as_ptr(), 3, 1.0, out.as_mut_ptr()) }, MdStatus::Ok);
    assert_eq!(out[0], 0.5);
    assert!((out[1] + out[2] - 1.0).abs() < 1e-15);
    assert!((out[1] - 0.841344746068543).abs() < 1e-12);
}

#[test]
fn config_json_errors_map_to_config_status() {
    let bad = CString::new(r#"{"no_such_field": 1}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { md_config_from_json(bad.as_ptr(), &mut cfg) }, MdStatus::Config);
    assert!(cfg.is_null());

    let good = CString::new(r#"{"master_seed": 7}"#).unwrap();
    assert_eq!(unsafe { md_config_from_json(good.as_ptr(), &mut cfg) }, MdStatus::Ok);
    assert_eq!(unsafe { md_config_set_seed(cfg, 9) }, MdStatus::Ok);
    let mut report = ptr::null_mut();
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe { md_config_set_out_dir(cfg, out.as_ptr()) };
    // No cache yet: prediction fails cleanly instead of panicking.
    let s = unsafe { md_run_predict(cfg, &mut report) };
    assert!(matches!(s, MdStatus::Data | MdStatus::Config), "{s:?}");
    assert!(report.is_null());
    unsafe { md_config_free(cfg) };
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/multidecoder.h");
    let src = include_str!("../src/lib.rs");
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .filter_map(|rest| rest.split('(').next())
        .collect();
    assert!(exports.len() >= 20, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    let v = unsafe { CStr::from_ptr(md_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"multidecoder.h\"\nint main(void) { MdConfig *c = md_config_new_default(); md_config_free(c); return MD_STATUS_OK; }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let status = match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler found; skipping");
            return;
        }
    };
    assert!(status.success());
}
