use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use schauder_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 512];
    unsafe {
        schauder_last_error(buf.as_mut_ptr(), buf.len(), ptr::null_mut());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn builtin_eval_and_free() {
    unsafe {
        let mut f = ptr::null_mut();
        assert_eq!(
            schauder_function_builtin(c"spatial_cusp".as_ptr(), 1, 0.5, &mut f),
            SchauderStatus::Ok
        );
        assert_eq!(schauder_function_dim(f), 1);
        let mut v = 0.0;
        let x = [0.25];
        assert_eq!(
            schauder_function_eval(f, x.as_ptr(), 1, 0.0, &mut v),
            SchauderStatus::Ok
        );
        assert_eq!(v, 0.5);
        assert_eq!(
            schauder_function_eval(f, x.as_ptr(), 2, 0.0, &mut v),
            SchauderStatus::InvalidArgument
        );
        assert!(last_error().contains("dimension mismatch"));
        let mut s = 0.0;
        assert_eq!(
            schauder_holder_seminorm(f, 0.5, 17, 17, 1_000_000, &mut s),
            SchauderStatus::Ok
        );
        assert!(s > 0.9 && s <= 1.0 + 1e-12);
        schauder_function_free(f);
        schauder_function_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut f = ptr::null_mut();
        assert_eq!(
            schauder_function_builtin(c"nope".as_ptr(), 1, 0.5, &mut f),
            SchauderStatus::InvalidArgument
        );
        assert!(f.is_null());
        assert_eq!(
            schauder_function_builtin(ptr::null(), 1, 0.5, &mut f),
            SchauderStatus::NullPointer
        );
        let bytes = [0xffu8, 0];
        assert_eq!(
            schauder_function_builtin(bytes.as_ptr().cast(), 1, 0.5, &mut f),
            SchauderStatus::InvalidUtf8
        );
        let mut v = 0.0;
        assert_eq!(
            schauder_scaling_integral(2, 2, 1.0, 1, &mut v),
            SchauderStatus::Divergent
        );
        assert!(last_error().contains("divergent"));
        assert_eq!(schauder_scaling_integral(4, 2, 1.0, 1, &mut v), SchauderStatus::Ok);
        assert!((v - 2.0 / std::f64::consts::PI).abs() < 1e-6);
        assert_eq!(last_error(), "");
        assert_eq!(schauder_kernel_mass(1, -1.0, &mut v), SchauderStatus::InvalidArgument);
    }
}

#[test]
fn pdist_matches_definition() {
    let (x, y) = ([0.0, 0.0], [0.3, 0.4]);
    unsafe {
        assert_eq!(schauder_pdist(x.as_ptr(), 0.0, y.as_ptr(), -0.09, 2), 0.5);
        assert_eq!(schauder_pdist(x.as_ptr(), 0.0, y.as_ptr(), -1.0, 2), 1.0);
        assert!(schauder_pdist(ptr::null(), 0.0, y.as_ptr(), 0.0, 2).is_nan());
    }
}

#[test]
fn reports_through_handles() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(schauder_config_new(1, 0.5, 7, &mut cfg), SchauderStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(
            schauder_check_run(cfg, c"scaling_integral".as_ptr(), &mut r),
            SchauderStatus::Ok
        );
        let mut passed = true;
        assert_eq!(schauder_report_passed(r, &mut passed), SchauderStatus::Ok);
        assert!(!passed);
        let mut need = 0;
        assert_eq!(
            schauder_report_json(r, ptr::null_mut(), 0, &mut need),
            SchauderStatus::BufferTooSmall
        );
        let mut buf = vec![0 as std::ffi::c_char; need];
        assert_eq!(
            schauder_report_json(r, buf.as_mut_ptr(), need, &mut need),
            SchauderStatus::Ok
        );
        let json = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
        let v: serde_json::Value = serde_json::from_str(json).unwrap();
        assert_eq!(v["check"], "scaling_integral");
        schauder_report_free(r);

        let mut bad = ptr::null_mut();
        assert_eq!(
            schauder_check_run(cfg, c"nope".as_ptr(), &mut bad),
            SchauderStatus::InvalidArgument
        );
        schauder_config_free(cfg);

        let mut parsed = ptr::null_mut();
        assert_eq!(
            schauder_config_from_json(c"{\"dim\": 1}".as_ptr(), &mut parsed),
            SchauderStatus::InvalidArgument
        );
        assert!(parsed.is_null());
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

/// Directory holding the built `libschauder_ffi` artifacts.
fn lib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let inc = header();
    assert!(inc.join("schauder.h").exists());
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let st = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(&inc)
            .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c"))
            .status()
            .unwrap();
        assert!(st.success(), "{compiler} rejected the header");
    }
}

#[test]
fn c_program_links_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let libs = lib_dir();
    assert!(
        libs.join("libschauder_ffi.so").exists(),
        "no shared library in {}",
        libs.display()
    );
    let st = Command::new("cc")
        .arg("-I")
        .arg(header())
        .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c"))
        .arg("-o")
        .arg(&exe)
        .arg("-L")
        .arg(&libs)
        .args(["-lschauder_ffi", "-lm"])
        .arg(format!("-Wl,-rpath,{}", libs.display()))
        .status()
        .unwrap();
    assert!(st.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).trim_end().ends_with("ok"));
}
