use std::collections::BTreeSet;

use super::check::{resolve, SymbolKind, SymbolTable};
use crate::dsl::ast::*;
use crate::error::SemanticError;

/// Variables that transitively depend on the independent parameters.
///
/// Flow-insensitive: a variable is active if any of its assignments reads an
/// active variable. Arrays are tracked as a whole.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActivitySet {
    names: BTreeSet<String>,
}

impl ActivitySet {
    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn is_subset(&self, other: &ActivitySet) -> bool {
        self.names.is_subset(&other.names)
    }

    pub(crate) fn insert(&mut self, name: &str) -> bool {
        self.names.insert(name.to_string())
    }

    fn reads_active(&self, e: &Expr) -> bool {
        let mut hit = false;
        e.walk(&mut |n| match &n.kind {
            ExprKind::Var(v) | ExprKind::Index(v, _) if self.names.contains(v) => hit = true,
            _ => {}
        });
        hit
    }
}

impl FromIterator<String> for ActivitySet {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        ActivitySet { names: iter.into_iter().collect() }
    }
}

/// Check a `wrt` list against `f`'s parameters.
pub(crate) fn validate_wrt(f: &FunctionDef, wrt: &[&str]) -> Result<(), SemanticError> {
    for w in wrt {
        let p = f.param(w).ok_or_else(|| SemanticError::UnknownParameter { name: w.to_string(), function: f.name.clone() })?;
        if !p.ty.is_real() {
            return Err(SemanticError::NonRealParameter { name: w.to_string(), function: f.name.clone() });
        }
    }
    Ok(())
}

pub fn activity(f: &FunctionDef, wrt: &[&str]) -> Result<ActivitySet, SemanticError> {
    let table = resolve(f)?;
    validate_wrt(f, wrt)?;
    Ok(activity_with(f, &table, wrt))
}

pub(crate) fn activity_with(f: &FunctionDef, table: &SymbolTable, wrt: &[&str]) -> ActivitySet {
    let mut set: ActivitySet = wrt.iter().map(|w| w.to_string()).collect();
    let real_target = |name: &str| {
        table
            .get(name)
            .is_some_and(|s| s.kind != SymbolKind::LoopVar && s.ty.is_real())
    };
    loop {
        let mut changed = false;
        walk_stmts(&f.body, &mut |s| match &s.kind {
            StmtKind::Decl { name, init, .. } => {
                if real_target(name) && set.reads_active(init) {
                    changed |= set.insert(name);
                }
            }
            StmtKind::Assign { target, value, .. } => {
                if real_target(&target.name) && set.reads_active(value) {
                    changed |= set.insert(&target.name);
                }
            }
            StmtKind::Call { args, .. } => {
                // Any array handed to a callee alongside an active value may be written with it.
                if args.iter().any(|a| set.reads_active(a)) {
                    for a in args {
                        if let ExprKind::Var(n) | ExprKind::Index(n, _) = &a.kind {
                            if table.get(n).is_some_and(|s| s.ty == Type::RealArray) {
                                changed |= set.insert(n);
                            }
                        }
                    }
                }
            }
            _ => {}
        });
        if !changed {
            return set;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    const GAUSS: &str = "device host real gauss(real x, real p, real sigma) { real t = -(x-p)*(x-p)/(2*sigma*sigma); return pow(2*PI, -0.5) * pow(sigma, -0.5) * exp(t); }";

    fn names(s: &ActivitySet) -> Vec<&str> {
        s.iter().collect()
    }

    #[test]
    fn gauss_activity() {
        let f = parse(GAUSS).unwrap().functions.remove(0);
        assert_eq!(names(&activity(&f, &["x", "p"]).unwrap()), vec!["p", "t", "x"]);
        assert_eq!(names(&activity(&f, &["sigma"]).unwrap()), vec!["sigma", "t"]);
        assert!(activity(&f, &[]).unwrap().is_empty());
    }

    #[test]
    fn fixed_point_through_later_assignments() {
        // `a` only becomes active through `b`, which is assigned after `a` is read.
        let f = parse("real f(real x, real y) { real a = y; real b = 0; for (int i = 0; i < 3; i++) { a = a + b; b = x; } return a; }")
            .unwrap()
            .functions
            .remove(0);
        assert_eq!(names(&activity(&f, &["x"]).unwrap()), vec!["a", "b", "x"]);
        assert_eq!(names(&activity(&f, &["y"]).unwrap()), vec!["a", "y"]);
    }

    #[test]
    fn integers_and_loop_variables_stay_inactive() {
        let f = parse("real f(real x, int n) { int k = n; real s = 0; for (int i = 0; i < n; i++) { s = s + x * i; } return s + k; }")
            .unwrap()
            .functions
            .remove(0);
        assert_eq!(names(&activity(&f, &["x"]).unwrap()), vec!["s", "x"]);
    }

    #[test]
    fn rejects_bad_wrt() {
        let f = parse("real f(real x, int n) { return x; }").unwrap().functions.remove(0);
        assert!(matches!(activity(&f, &["z"]), Err(SemanticError::UnknownParameter { .. })));
        assert!(matches!(activity(&f, &["n"]), Err(SemanticError::NonRealParameter { .. })));
    }
}
