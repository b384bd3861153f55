use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use adc_ffi::*;

const GAUSS: &str = "device host real gauss(real x, real p, real sigma) {
    real t = -(x - p) * (x - p) / (2 * sigma * sigma);
    return pow(2 * PI, -0.5) * pow(sigma, -0.5) * exp(t);
}
real prod(real x, real y) { return x * y; }";

fn module(src: &str) -> *mut AdcModule {
    let src = CString::new(src).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { adc_module_parse(src.as_ptr(), &mut m) }, AdcStatus::Ok);
    m
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(adc_last_error()) }.to_str().unwrap().to_string()
}

#[test]
fn gradient_and_eval_through_the_c_abi() {
    let m = module(GAUSS);
    let name = CString::new("prod").unwrap();
    let mut g = [0.0; 2];
    let mut ops = 0u64;
    let st = unsafe { adc_gradient(m, name.as_ptr(), [3.0, 5.0].as_ptr(), 2, g.as_mut_ptr(), 2, &mut ops) };
    assert_eq!(st, AdcStatus::Ok, "{}", last_error());
    assert_eq!(g, [5.0, 3.0]);
    assert!(ops > 0);

    let mut v = 0.0;
    let st = unsafe { adc_eval(m, name.as_ptr(), [3.0, 5.0].as_ptr(), 2, &mut v, ptr::null_mut()) };
    assert_eq!(st, AdcStatus::Ok);
    assert_eq!(v, 15.0);

    let mut h = [0.0; 4];
    let st = unsafe { adc_hessian(m, name.as_ptr(), [3.0, 5.0].as_ptr(), 2, h.as_mut_ptr(), 4) };
    assert_eq!(st, AdcStatus::Ok, "{}", last_error());
    assert_eq!(h, [0.0, 1.0, 1.0, 0.0]);

    let gauss = CString::new("gauss").unwrap();
    let mut g = [0.0; 3];
    let st = unsafe { adc_gradient(m, gauss.as_ptr(), [1.0, 0.0, 1.0].as_ptr(), 3, g.as_mut_ptr(), 3, ptr::null_mut()) };
    assert_eq!(st, AdcStatus::Ok);
    let phi1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
    assert!((g[0] + phi1).abs() < 1e-15 && (g[1] - phi1).abs() < 1e-15);
    unsafe { adc_module_free(m) };
}

#[test]
fn differentiate_and_print() {
    let m = module(GAUSS);
    let (f, wrt) = (CString::new("gauss").unwrap(), CString::new("x,p").unwrap());
    let mut name = ptr::null_mut();
    let before = unsafe { adc_module_function_count(m) };
    let st = unsafe { adc_module_differentiate(m, f.as_ptr(), AdcMode::Reverse, wrt.as_ptr(), &mut name) };
    assert_eq!(st, AdcStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(name) }.to_str().unwrap(), "gauss_grad_0_1");
    assert_eq!(unsafe { adc_module_function_count(m) }, before + 1);
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { adc_module_print(m, &mut text) }, AdcStatus::Ok);
    let s = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_string();
    assert!(s.contains("device host void gauss_grad_0_1(real x, real p, real sigma, real[] _d_x, real[] _d_p)"));
    unsafe {
        adc_string_free(name);
        adc_string_free(text);
        adc_module_free(m);
    }
}

#[test]
fn errors_are_codes_with_messages() {
    let bad = CString::new("real f(real x) { return x +; }").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { adc_module_parse(bad.as_ptr(), &mut m) }, AdcStatus::ParseError);
    assert!(m.is_null());
    assert!(last_error().contains("syntax error"));

    let undefined = CString::new("real f(real x) { return y; }").unwrap();
    assert_eq!(unsafe { adc_module_parse(undefined.as_ptr(), &mut m) }, AdcStatus::SemanticError);

    let m = module("real l(real x) { return log(x); }");
    let l = CString::new("l").unwrap();
    let mut v = 0.0;
    assert_eq!(unsafe { adc_eval(m, l.as_ptr(), [-1.0].as_ptr(), 1, &mut v, ptr::null_mut()) }, AdcStatus::EvalError);
    assert!(last_error().contains("domain"));
    assert_eq!(unsafe { adc_eval(m, l.as_ptr(), [1.0, 2.0].as_ptr(), 2, &mut v, ptr::null_mut()) }, AdcStatus::InvalidArgument);
    assert_eq!(unsafe { adc_eval(ptr::null_mut(), l.as_ptr(), ptr::null(), 0, &mut v, ptr::null_mut()) }, AdcStatus::InvalidArgument);
    let x = CString::new("x,y").unwrap();
    assert_eq!(
        unsafe { adc_module_differentiate(m, l.as_ptr(), AdcMode::Forward, x.as_ptr(), ptr::null_mut()) },
        AdcStatus::InvalidArgument
    );
    unsafe { adc_module_free(m) };
    unsafe { adc_module_free(ptr::null_mut()) };
}

/// Compile and run a small C program against the generated header and the
/// static library, when a C compiler is around.
#[test]
fn header_compiles_from_c() {
    let Ok(cc) = which_cc() else { return };
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include/adc.h");
    assert!(header.exists(), "header not generated");
    let target = root.join("../../target");
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    let lib = target.join(profile).join("libadc_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("t.c");
    std::fs::write(
        &c,
        r#"#include <stdio.h>
#include "adc.h"
int main(void) {
    AdcModule *m = NULL;
    if (adc_module_parse("real f(real x, real y) { return x * y; }", &m) != ADC_STATUS_OK) return 1;
    double args[2] = {3, 5}, g[2];
    if (adc_gradient(m, "f", args, 2, g, 2, NULL) != ADC_STATUS_OK) return 2;
    if (adc_module_parse("real f(", &m) != ADC_STATUS_PARSE_ERROR) return 3;
    printf("%g %g\n", g[0], g[1]);
    adc_module_free(m);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("t");
    let out = Command::new(cc)
        .arg(&c)
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "5 3");
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().map(|o| o.status.success()).unwrap_or(false) {
            return Ok(cc);
        }
    }
    Err(())
}
