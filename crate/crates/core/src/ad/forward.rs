use std::collections::{BTreeMap, HashSet};

use super::build::*;
use super::rules::Rules;
use super::{all_names, validate_output};
use crate::dsl::ast::*;
use crate::error::DiffError;
use crate::semantic::{propagate_qualifiers, resolve, ActivitySet};
use crate::semantic::{activity_with, validate_wrt};

/// A generated tangent function `<f>_darg<i>`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentProgram {
    pub derived: FunctionDef,
    /// Original name to tangent name, for every variable that carries one.
    pub tangents: BTreeMap<String, String>,
    /// Tangent arrays appended to the signature, in parameter order. A seed
    /// for an array `wrt` (the direction) or an output for a written array.
    pub tangent_params: Vec<TangentParam>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentParam {
    pub name: String,
    /// The array parameter this one is the tangent of.
    pub of: String,
}

impl TangentProgram {
    pub fn tangent_of(&self, name: &str) -> Option<&str> {
        self.tangents.get(name).map(String::as_str)
    }
}

pub fn forward_name(f: &FunctionDef, wrt_index: usize) -> String {
    format!("{}_darg{}", f.name, wrt_index)
}

/// Emit the directional derivative of `f` along parameter `wrt`.
///
/// Scalar parameters get a unit seed. For an array `wrt` the tangent array
/// appended to the signature is the seed direction, supplied by the caller.
/// Array parameters the body writes with active values get an appended
/// tangent array too, which receives their derivative.
pub fn differentiate_forward(f: &FunctionDef, wrt: &str) -> Result<TangentProgram, DiffError> {
    let qualifiers = propagate_qualifiers(f)?;
    let table = resolve(f)?;
    validate_wrt(f, &[wrt])?;
    let active = activity_with(f, &table, &[wrt]);

    let mut used = all_names(f, &table);
    let mut tangents = BTreeMap::new();
    let fresh = |name: &str, used: &mut HashSet<String>| {
        let mut cand = format!("_d_{name}");
        let mut k = 2;
        while used.contains(&cand) {
            cand = format!("_d{k}_{name}");
            k += 1;
        }
        used.insert(cand.clone());
        cand
    };

    let assigned = assigned_scalars(&f.body);
    let mut hoisted = Vec::new();
    let mut tangent_params = Vec::new();
    let mut unit_seeded = HashSet::new();
    for p in &f.params {
        if !active.contains(&p.name) {
            continue;
        }
        match p.ty {
            Type::RealArray => {
                let t = fresh(&p.name, &mut used);
                tangent_params.push(TangentParam { name: t.clone(), of: p.name.clone() });
                tangents.insert(p.name.clone(), t);
            }
            Type::Real if p.name == wrt && !assigned.contains(&p.name) => {
                unit_seeded.insert(p.name.clone());
            }
            Type::Real => {
                let t = fresh(&p.name, &mut used);
                let seed = if p.name == wrt { 1.0 } else { 0.0 };
                hoisted.push(Stmt::decl(t.clone(), Type::Real, c(seed)));
                tangents.insert(p.name.clone(), t);
            }
            Type::Int => {}
        }
    }
    for (name, sym) in table.locals() {
        if sym.ty == Type::Real && active.contains(name) {
            let t = fresh(name, &mut used);
            tangents.insert(name.to_string(), t);
        }
    }

    let fw = Forward { tangents: &tangents, unit_seeded: &unit_seeded, active: &active };
    let mut body = hoisted;
    body.extend(fw.block(&f.body)?);

    let mut params = f.params.clone();
    params.extend(tangent_params.iter().map(|t| Param::new(t.name.clone(), Type::RealArray)));
    let wrt_index = f.param_index(wrt).expect("validated");
    let derived = FunctionDef {
        name: forward_name(f, wrt_index),
        qualifiers,
        ret: f.ret,
        params,
        body,
        span: f.span,
    };
    validate_output(&derived)?;
    Ok(TangentProgram { derived, tangents, tangent_params })
}

fn assigned_scalars(body: &[Stmt]) -> HashSet<String> {
    let mut out = HashSet::new();
    walk_stmts(body, &mut |s| {
        if let StmtKind::Assign { target: LValue { name, index: None }, .. } = &s.kind {
            out.insert(name.clone());
        }
    });
    out
}

struct Forward<'a> {
    tangents: &'a BTreeMap<String, String>,
    unit_seeded: &'a HashSet<String>,
    active: &'a ActivitySet,
}

impl Forward<'_> {
    fn leaf(&self, e: &Expr) -> Option<Expr> {
        match &e.kind {
            ExprKind::Var(n) if self.unit_seeded.contains(n) => Some(c(1.0)),
            ExprKind::Var(n) => self.tangents.get(n).map(Expr::var),
            ExprKind::Index(n, i) => self.tangents.get(n).map(|t| Expr::index(t.clone(), (**i).clone())),
            _ => None,
        }
    }

    fn tangent(&self, e: &Expr) -> Result<Option<Expr>, DiffError> {
        let leaf = |l: &Expr| self.leaf(l);
        Rules { leaf: &leaf, reuse: None }.tangent(e)
    }

    fn block(&self, body: &[Stmt]) -> Result<Vec<Stmt>, DiffError> {
        let mut out = Vec::with_capacity(body.len() * 2);
        for s in body {
            self.stmt(s, &mut out)?;
        }
        Ok(out)
    }

    fn stmt(&self, s: &Stmt, out: &mut Vec<Stmt>) -> Result<(), DiffError> {
        let is_pop = |e: &Expr| matches!(e.kind, ExprKind::Pop(TapeStack::Value));
        match &s.kind {
            StmtKind::Decl { name, init, .. } => {
                if let Some(t) = self.tangents.get(name) {
                    let init_t = if is_pop(init) { init.clone() } else { or_zero(self.tangent(init)?) };
                    out.push(Stmt::new(StmtKind::Decl { name: t.clone(), ty: Type::Real, init: init_t }, s.span));
                }
                out.push(s.clone());
            }
            StmtKind::Assign { target, op, value } => {
                if let Some(t) = self.tangents.get(&target.name) {
                    let lv = LValue { name: t.clone(), index: target.index.clone() };
                    match op {
                        AssignOp::Set if is_pop(value) => out.push(Stmt::assign(lv, AssignOp::Set, value.clone())),
                        AssignOp::Set => out.push(Stmt::assign(lv, AssignOp::Set, or_zero(self.tangent(value)?))),
                        AssignOp::Add => {
                            if let Some(d) = self.tangent(value)? {
                                out.push(Stmt::assign(lv, AssignOp::Add, d));
                            }
                        }
                    }
                }
                out.push(s.clone());
            }
            StmtKind::Return(e) => {
                out.push(Stmt::new(StmtKind::Return(or_zero(self.tangent(e)?)), s.span));
            }
            StmtKind::If { cond, then_body, else_body } => out.push(Stmt::new(
                StmtKind::If { cond: cond.clone(), then_body: self.block(then_body)?, else_body: self.block(else_body)? },
                s.span,
            )),
            StmtKind::For { var, start, end, dir, body } => out.push(Stmt::new(
                StmtKind::For { var: var.clone(), start: start.clone(), end: end.clone(), dir: *dir, body: self.block(body)? },
                s.span,
            )),
            StmtKind::Call { name, .. } => {
                return Err(DiffError::Unsupported { span: s.span, what: format!("the call statement `{name}(...)`") })
            }
            StmtKind::Push(TapeStack::Value, e) => {
                out.push(s.clone());
                match &e.kind {
                    // The tangent rides on the stack above its value; the
                    // matching `v = __pop()` takes it off first.
                    ExprKind::Var(v) if self.tangents.contains_key(v) => {
                        out.push(Stmt::push(TapeStack::Value, Expr::var(self.tangents[v].clone())));
                    }
                    ExprKind::Var(v) if !self.active.contains(v) || self.unit_seeded.contains(v) => {}
                    _ if self.tangent(e)?.is_none() => {}
                    _ => return Err(DiffError::Unsupported { span: s.span, what: "pushing an active expression that is not a variable".into() }),
                }
            }
            StmtKind::Push(TapeStack::Control, _) => out.push(s.clone()),
        }
        Ok(())
    }
}
