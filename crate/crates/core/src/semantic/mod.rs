//! Name resolution, well-formedness checks, qualifier propagation and
//! activity analysis.

mod activity;
mod check;

pub use activity::{activity, ActivitySet};
pub(crate) use activity::{activity_with, validate_wrt};
pub use check::{check_function, check_module, resolve, Symbol, SymbolKind, SymbolTable};

use crate::dsl::ast::{FunctionDef, Qualifiers};
use crate::error::SemanticError;

/// Qualifiers a generated derivative of `f` must carry: exactly those of `f`.
/// Kernels are rejected.
pub fn propagate_qualifiers(f: &FunctionDef) -> Result<Qualifiers, SemanticError> {
    if f.is_global() {
        return Err(SemanticError::KernelNotDifferentiable { name: f.name.clone() });
    }
    Ok(f.qualifiers.clone())
}
