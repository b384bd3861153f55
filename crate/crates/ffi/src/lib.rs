//! C ABI over `adc-core`.
//!
//! Modules are opaque handles created by [`adc_module_parse`] and released
//! with [`adc_module_free`]. Every fallible call returns an [`AdcStatus`];
//! on failure [`adc_last_error`] describes the problem. Strings handed out by
//! the library are freed with [`adc_string_free`].
//!
//! The numeric entry points take scalar arguments only: `real` and `int`
//! parameters passed as doubles, in declaration order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use adc_core::ad::{self, complete_module, gradient_name, DerivativeRequest, HessianPlan};
use adc_core::dsl::{parse, print, Module, Type};
use adc_core::error::DiffError;
use adc_core::eval::{Arg, Program};
use adc_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdcStatus {
    Ok = 0,
    ParseError = 1,
    SemanticError = 2,
    DiffError = 3,
    EvalError = 4,
    InvalidArgument = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdcMode {
    Forward = 0,
    Reverse = 1,
}

/// A parsed and checked module, plus its lowered form once something runs.
pub struct AdcModule {
    module: Module,
    program: Option<Program>,
}

impl AdcModule {
    fn program(&mut self) -> Result<&Program, Error> {
        if self.program.is_none() {
            self.program = Some(Program::compile(&self.module)?);
        }
        Ok(self.program.as_ref().expect("just compiled"))
    }

    fn add(&mut self, functions: Vec<adc_core::dsl::FunctionDef>) {
        for f in functions {
            if self.module.function(&f.name).is_none() {
                self.module.functions.push(f);
            }
        }
        self.program = None;
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Core(Error),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<DiffError> for Failure {
    fn from(e: DiffError) -> Self {
        Failure::Core(e.into())
    }
}

fn status_of(e: &Error) -> AdcStatus {
    match e {
        Error::Parse(_) => AdcStatus::ParseError,
        Error::Semantic(_) | Error::Diff(DiffError::Semantic(_)) => AdcStatus::SemanticError,
        Error::Diff(_) => AdcStatus::DiffError,
        Error::Eval(_) | Error::Perturbed { .. } => AdcStatus::EvalError,
        Error::Input(_) => AdcStatus::InvalidArgument,
        _ => AdcStatus::Internal,
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> AdcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            AdcStatus::Ok
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(&msg);
            AdcStatus::InvalidArgument
        }
        Err(_) => {
            set_error("internal error (panic inside adc)");
            AdcStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Arg(format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn module_arg<'a>(m: *mut AdcModule) -> Result<&'a mut AdcModule, Failure> {
    m.as_mut().ok_or_else(|| Failure::Arg("module handle is null".into()))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Arg(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_slice<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Arg(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

fn give_string(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Arg("output pointer is null".into()));
    }
    let c = CString::new(s).map_err(|_| Failure::Arg("string contains a NUL byte".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Bind doubles to the scalar parameters of `name`.
fn scalar_args(m: &Module, name: &str, values: &[f64]) -> Result<Vec<Arg>, Failure> {
    let f = m.function(name).ok_or_else(|| Failure::Arg(format!("no function named `{name}`")))?;
    if f.params.len() != values.len() {
        return Err(Failure::Arg(format!("`{name}` takes {} argument(s), got {}", f.params.len(), values.len())));
    }
    f.params
        .iter()
        .zip(values)
        .map(|(p, v)| match p.ty {
            Type::Real => Ok(Arg::Real(*v)),
            Type::Int if v.fract() == 0.0 => Ok(Arg::Int(*v as i64)),
            Type::Int => Err(Failure::Arg(format!("`{}` is an int, got {v}", p.name))),
            Type::RealArray => Err(Failure::Arg(format!("array parameter `{}` is not supported through the C interface", p.name))),
        })
        .collect()
}

/// Names of the real scalar parameters of `name`, in order.
fn real_params(m: &Module, name: &str) -> Result<Vec<String>, Failure> {
    let f = m.function(name).ok_or_else(|| Failure::Arg(format!("no function named `{name}`")))?;
    Ok(f.params.iter().filter(|p| p.ty == Type::Real).map(|p| p.name.clone()).collect())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn adc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn adc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parse and check `source`. Calls to `<f>_grad...` and `<f>_darg<i>`
/// functions that the source does not define are generated.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adc_module_parse(source: *const c_char, out: *mut *mut AdcModule) -> AdcStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Arg("output pointer is null".into()));
        }
        *out = ptr::null_mut();
        let src = str_arg(source, "source")?;
        let parsed = parse(src).map_err(Error::from)?;
        let module = complete_module(&parsed)?;
        adc_core::semantic::check_module(&module).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(AdcModule { module, program: None }));
        Ok(())
    })
}

/// Release a module. Null is ignored.
///
/// # Safety
/// `m` must come from [`adc_module_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adc_module_free(m: *mut AdcModule) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of functions in the module.
///
/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn adc_module_function_count(m: *const AdcModule) -> usize {
    m.as_ref().map(|m| m.module.functions.len()).unwrap_or(0)
}

/// Source text of the whole module; free with [`adc_string_free`].
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adc_module_print(m: *mut AdcModule, out: *mut *mut c_char) -> AdcStatus {
    guard(|| {
        let m = module_arg(m)?;
        give_string(print(&m.module), out)
    })
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn adc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generate a derivative of `function` and add it to the module. `wrt` is a
/// comma-separated list of parameter names; forward mode takes exactly one.
/// The generated function's name is stored in `out_name` (free with
/// [`adc_string_free`]) when `out_name` is not null.
///
/// # Safety
/// Strings must be NUL-terminated; `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn adc_module_differentiate(
    m: *mut AdcModule,
    function: *const c_char,
    mode: AdcMode,
    wrt: *const c_char,
    out_name: *mut *mut c_char,
) -> AdcStatus {
    guard(|| {
        let m = module_arg(m)?;
        let name = str_arg(function, "function")?;
        let wrt: Vec<&str> = str_arg(wrt, "wrt")?.split(',').map(str::trim).filter(|w| !w.is_empty()).collect();
        let req = match mode {
            AdcMode::Reverse => DerivativeRequest::reverse(name, &wrt),
            AdcMode::Forward => {
                if wrt.len() != 1 {
                    return Err(Failure::Arg("forward mode takes exactly one parameter".into()));
                }
                DerivativeRequest::forward(name, wrt[0])
            }
        };
        let derived = ad::differentiate(&m.module, &req)?;
        let first = derived[0].name.clone();
        m.add(derived);
        if !out_name.is_null() {
            give_string(first, out_name)?;
        }
        Ok(())
    })
}

/// Evaluate a real-valued function. `ops`, when not null, receives the
/// arithmetic operation count.
///
/// # Safety
/// `args` must point to `nargs` doubles, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn adc_eval(
    m: *mut AdcModule,
    function: *const c_char,
    args: *const f64,
    nargs: usize,
    out: *mut f64,
    ops: *mut u64,
) -> AdcStatus {
    guard(|| {
        let m = module_arg(m)?;
        let name = str_arg(function, "function")?;
        let args = scalar_args(&m.module, name, slice_arg(args, nargs, "args")?)?;
        let r = m.program()?.call(name, &args).map_err(Error::from)?;
        let v = r.value.ok_or_else(|| Failure::Arg(format!("`{name}` returns void")))?;
        if out.is_null() {
            return Err(Failure::Arg("out is null".into()));
        }
        *out = v;
        if !ops.is_null() {
            *ops = r.ops.total();
        }
        Ok(())
    })
}

/// Reverse-mode gradient with respect to every real parameter, in order.
/// `grad` must hold one double per real parameter. `ops`, when not null,
/// receives the gradient's operation count.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn adc_gradient(
    m: *mut AdcModule,
    function: *const c_char,
    args: *const f64,
    nargs: usize,
    grad: *mut f64,
    ngrad: usize,
    ops: *mut u64,
) -> AdcStatus {
    guard(|| {
        let m = module_arg(m)?;
        let name = str_arg(function, "function")?;
        let point = scalar_args(&m.module, name, slice_arg(args, nargs, "args")?)?;
        let wrt = real_params(&m.module, name)?;
        if wrt.len() != ngrad {
            return Err(Failure::Arg(format!("`{name}` has {} real parameter(s), gradient buffer holds {ngrad}", wrt.len())));
        }
        let wrt_ref: Vec<&str> = wrt.iter().map(String::as_str).collect();
        let f = m.module.function(name).expect("checked").clone();
        let gname = gradient_name(&f, &wrt_ref);
        if m.module.function(&gname).is_none() {
            let derived = ad::differentiate(&m.module, &DerivativeRequest::reverse(name, &wrt_ref))?;
            m.add(derived);
        }
        let mut call_args = point;
        call_args.extend(wrt.iter().map(|_| Arg::Array(vec![0.0])));
        let r = m.program()?.call(&gname, &call_args).map_err(Error::from)?;
        let out = out_slice(grad, ngrad, "grad")?;
        for (k, o) in out.iter_mut().enumerate() {
            *o = r.arrays[f.params.len() + k].as_ref().map(|a| a[0]).unwrap_or(0.0);
        }
        if !ops.is_null() {
            *ops = r.ops.total();
        }
        Ok(())
    })
}

/// Hessian with respect to every real parameter, row-major into `out`
/// (`n * n` doubles, `n` the number of real parameters).
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn adc_hessian(
    m: *mut AdcModule,
    function: *const c_char,
    args: *const f64,
    nargs: usize,
    out: *mut f64,
    nout: usize,
) -> AdcStatus {
    guard(|| {
        let m = module_arg(m)?;
        let name = str_arg(function, "function")?;
        let point = scalar_args(&m.module, name, slice_arg(args, nargs, "args")?)?;
        let wrt = real_params(&m.module, name)?;
        let n = wrt.len();
        if n * n != nout {
            return Err(Failure::Arg(format!("Hessian of `{name}` has {} entries, buffer holds {nout}", n * n)));
        }
        let wrt_ref: Vec<&str> = wrt.iter().map(String::as_str).collect();
        let f = m.module.function(name).expect("checked");
        let h = HessianPlan::new(f, &wrt_ref)?.eval(&point)?;
        let dst = out_slice(out, nout, "out")?;
        for (i, row) in h.matrix.iter().enumerate() {
            dst[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(())
    })
}
