//! Source-to-source differentiation.
//!
//! [`differentiate_forward`] emits a tangent function, [`differentiate_gradient`]
//! a reverse-mode gradient with caller-owned adjoint slots, and [`hessian`]
//! composes the two. Every emitted function is printed, re-parsed and
//! re-resolved before it is handed back.

mod build;
mod forward;
mod hessian;
mod reverse;
mod rules;

use std::collections::HashSet;

pub use forward::{differentiate_forward, forward_name, TangentParam, TangentProgram};
pub use hessian::{hessian, HessianPlan, HessianResult};
pub use reverse::{differentiate_gradient, differentiate_gradient_with, gradient_name, AdjointProgram, ReverseOptions};

use crate::dsl::ast::*;
use crate::dsl::{parse, print_function};
use crate::error::DiffError;
use crate::semantic::{resolve, SymbolTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Forward,
    Reverse,
}

/// Which function to differentiate, how, and with respect to what.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeRequest {
    pub function: String,
    pub mode: Mode,
    pub wrt: Vec<String>,
    pub prune: bool,
}

impl DerivativeRequest {
    pub fn reverse(function: &str, wrt: &[&str]) -> Self {
        DerivativeRequest { function: function.into(), mode: Mode::Reverse, wrt: wrt.iter().map(|w| w.to_string()).collect(), prune: true }
    }

    pub fn forward(function: &str, wrt: &str) -> Self {
        DerivativeRequest { function: function.into(), mode: Mode::Forward, wrt: vec![wrt.into()], prune: true }
    }
}

/// Generate the derivatives named by `req`; forward mode with several `wrt`
/// names yields one tangent function per name.
pub fn differentiate(m: &Module, req: &DerivativeRequest) -> Result<Vec<FunctionDef>, DiffError> {
    let f = m
        .function(&req.function)
        .ok_or_else(|| crate::error::SemanticError::UnknownFunction { name: req.function.clone() })?;
    let wrt: Vec<&str> = req.wrt.iter().map(String::as_str).collect();
    match req.mode {
        Mode::Reverse => Ok(vec![differentiate_gradient_with(f, &wrt, ReverseOptions { prune: req.prune })?.derived]),
        Mode::Forward => {
            if wrt.is_empty() {
                return Err(DiffError::EmptyWrt);
            }
            wrt.iter().map(|w| differentiate_forward(f, w).map(|t| t.derived)).collect()
        }
    }
}

/// Append generated functions for calls to `<f>_grad...` and `<f>_darg<i>`
/// that the module uses but does not define.
pub fn complete_module(m: &Module) -> Result<Module, DiffError> {
    let mut out = m.clone();
    loop {
        let defined: HashSet<&str> = out.functions.iter().map(|f| f.name.as_str()).collect();
        let mut missing = Vec::new();
        for f in &out.functions {
            walk_stmts(&f.body, &mut |s| {
                if let StmtKind::Call { name, .. } = &s.kind {
                    if !defined.contains(name.as_str()) && !missing.contains(name) {
                        missing.push(name.clone());
                    }
                }
            });
        }
        let mut added = Vec::new();
        for name in &missing {
            if let Some(g) = derive_by_name(&out, name)? {
                added.push(g);
            }
        }
        if added.is_empty() {
            return Ok(out);
        }
        out.functions.extend(added);
    }
}

fn derive_by_name(m: &Module, name: &str) -> Result<Option<FunctionDef>, DiffError> {
    if let Some(pos) = name.rfind("_grad") {
        let (base, rest) = (&name[..pos], &name[pos + "_grad".len()..]);
        if let Some(f) = m.function(base) {
            let wrt: Option<Vec<&str>> = if rest.is_empty() {
                Some(f.params.iter().filter(|p| p.ty.is_real()).map(|p| p.name.as_str()).collect())
            } else {
                rest.strip_prefix('_').and_then(|r| {
                    r.split('_').map(|i| i.parse::<usize>().ok().and_then(|i| f.params.get(i)).map(|p| p.name.as_str())).collect()
                })
            };
            if let Some(wrt) = wrt {
                let g = differentiate_gradient(f, &wrt)?;
                if g.derived.name == name {
                    return Ok(Some(g.derived));
                }
            }
        }
    }
    if let Some(pos) = name.rfind("_darg") {
        let (base, rest) = (&name[..pos], &name[pos + "_darg".len()..]);
        if let (Some(f), Ok(i)) = (m.function(base), rest.parse::<usize>()) {
            if let Some(p) = f.params.get(i) {
                return Ok(Some(differentiate_forward(f, &p.name)?.derived));
            }
        }
    }
    Ok(None)
}

pub(crate) fn all_names(f: &FunctionDef, table: &SymbolTable) -> HashSet<String> {
    let mut used: HashSet<String> = table.iter().map(|(n, _)| n.to_string()).collect();
    used.insert(f.name.clone());
    used.insert(PI_NAME.to_string());
    used
}

/// Emitted code must survive the printer and the front end unchanged.
pub(crate) fn validate_output(f: &FunctionDef) -> Result<(), DiffError> {
    let text = print_function(f);
    let m = parse(&text)?;
    let g = &m.functions[0];
    resolve(g)?;
    debug_assert_eq!(g, f, "printer round-trip changed generated code:\n{text}");
    Ok(())
}
