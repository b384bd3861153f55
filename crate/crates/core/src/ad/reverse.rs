use std::collections::{HashMap, HashSet};

use super::build::*;
use super::rules::{partial, real_leaves};
use super::{all_names, validate_output};
use crate::dsl::ast::*;
use crate::error::DiffError;
use crate::semantic::{activity_with, validate_wrt};
use crate::semantic::{propagate_qualifiers, resolve, SymbolKind, SymbolTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReverseOptions {
    /// Skip adjoints of variables that do not depend on any `wrt` parameter.
    /// Results are identical either way; only the operation count changes.
    pub prune: bool,
}

impl Default for ReverseOptions {
    fn default() -> Self {
        ReverseOptions { prune: true }
    }
}

/// A generated gradient function.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointProgram {
    pub derived: FunctionDef,
    /// Adjoint slot names `_d_<p>`, in request order, appended to the signature.
    pub slots: Vec<String>,
    /// The `wrt` parameters the slots belong to.
    pub wrt: Vec<String>,
    /// Locals saved on the value or control stack before each overwrite.
    pub taped: Vec<String>,
}

/// `<f>_grad` when `wrt` covers every real parameter, else
/// `<f>_grad_<i>_<j>...` with sorted parameter positions.
pub fn gradient_name(f: &FunctionDef, wrt: &[&str]) -> String {
    let mut idx: Vec<usize> = wrt.iter().filter_map(|w| f.param_index(w)).collect();
    idx.sort_unstable();
    idx.dedup();
    let reals = f.params.iter().filter(|p| p.ty.is_real()).count();
    if idx.len() == reals {
        format!("{}_grad", f.name)
    } else {
        let suffix: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        format!("{}_grad_{}", f.name, suffix.join("_"))
    }
}

pub fn differentiate_gradient(f: &FunctionDef, wrt: &[&str]) -> Result<AdjointProgram, DiffError> {
    differentiate_gradient_with(f, wrt, ReverseOptions::default())
}

pub fn differentiate_gradient_with(f: &FunctionDef, wrt: &[&str], opts: ReverseOptions) -> Result<AdjointProgram, DiffError> {
    let qualifiers = propagate_qualifiers(f)?;
    if wrt.is_empty() {
        return Err(DiffError::EmptyWrt);
    }
    let table = resolve(f)?;
    validate_wrt(f, wrt)?;
    if f.ret == ReturnType::Void {
        return Err(DiffError::Unsupported { span: f.span, what: format!("`{}`, which returns no value", f.name) });
    }
    let mut wrt_list: Vec<&str> = Vec::new();
    for w in wrt {
        if !wrt_list.contains(w) {
            wrt_list.push(w);
        }
    }
    let active = activity_with(f, &table, &wrt_list);

    let mut used = all_names(f, &table);
    let claim = |name: String, used: &mut HashSet<String>| -> Result<String, DiffError> {
        if !used.insert(name.clone()) {
            return Err(DiffError::NameCollision { name });
        }
        Ok(name)
    };

    let slots = wrt_list.iter().map(|w| claim(format!("_d_{w}"), &mut used)).collect::<Result<Vec<_>, _>>()?;

    let locals: Vec<(String, Type)> = table.locals().map(|(n, s)| (n.to_string(), s.ty)).collect();
    let mut adjoints = HashMap::new();
    for (name, ty) in &locals {
        if *ty == Type::Real && (!opts.prune || active.contains(name)) {
            adjoints.insert(name.clone(), claim(format!("_d_{name}"), &mut used)?);
        }
    }

    let taped = taped_locals(&f.body, &table);
    let mut gen = Gen {
        table: &table,
        adjoints: &adjoints,
        wrt_scalars: wrt_list.iter().filter(|w| f.param(w).is_some_and(|p| p.ty == Type::Real)).map(|w| w.to_string()).collect(),
        wrt_arrays: wrt_list.iter().filter(|w| f.param(w).is_some_and(|p| p.ty == Type::RealArray)).map(|w| w.to_string()).collect(),
        taped: &taped,
        used,
        temps: Vec::new(),
    };
    let (fwd, rev) = gen.sweep(&f.body)?;

    let mut body: Vec<Stmt> = Vec::new();
    for (name, ty) in &locals {
        body.push(Stmt::decl(name.clone(), *ty, c(0.0)));
    }
    for (name, _) in &locals {
        if let Some(a) = adjoints.get(name) {
            body.push(Stmt::decl(a.clone(), Type::Real, c(0.0)));
        }
    }
    for (name, ty) in &gen.temps {
        body.push(Stmt::decl(name.clone(), *ty, c(0.0)));
    }
    body.extend(fwd);
    body.extend(rev);

    let mut params = f.params.clone();
    params.extend(slots.iter().map(|s| Param::new(s.clone(), Type::RealArray)));
    let derived = FunctionDef {
        name: gradient_name(f, &wrt_list),
        qualifiers,
        ret: ReturnType::Void,
        params,
        body,
        span: f.span,
    };
    validate_output(&derived)?;
    let mut taped: Vec<String> = taped.into_iter().collect();
    taped.sort();
    Ok(AdjointProgram { derived, slots, wrt: wrt_list.iter().map(|w| w.to_string()).collect(), taped })
}

/// Locals whose old value must be saved before an overwrite: those with
/// more than one assignment site, or any site inside a loop.
fn taped_locals(body: &[Stmt], table: &SymbolTable) -> HashSet<String> {
    fn visit(body: &[Stmt], in_loop: bool, sites: &mut HashMap<String, (usize, bool)>) {
        for s in body {
            match &s.kind {
                StmtKind::Decl { name, .. } | StmtKind::Assign { target: LValue { name, index: None }, .. } => {
                    let e = sites.entry(name.clone()).or_default();
                    e.0 += 1;
                    e.1 |= in_loop;
                }
                StmtKind::If { then_body, else_body, .. } => {
                    visit(then_body, in_loop, sites);
                    visit(else_body, in_loop, sites);
                }
                StmtKind::For { body, .. } => visit(body, true, sites),
                _ => {}
            }
        }
    }
    let mut sites = HashMap::new();
    visit(body, false, &mut sites);
    sites
        .into_iter()
        .filter(|(n, (count, in_loop))| {
            (*count > 1 || *in_loop) && table.get(n).is_some_and(|s| s.kind == SymbolKind::Local)
        })
        .map(|(n, _)| n)
        .collect()
}

struct Gen<'a> {
    table: &'a SymbolTable,
    adjoints: &'a HashMap<String, String>,
    wrt_scalars: HashSet<String>,
    wrt_arrays: HashSet<String>,
    taped: &'a HashSet<String>,
    used: HashSet<String>,
    temps: Vec<(String, Type)>,
}

impl Gen<'_> {
    fn temp(&mut self, prefix: &str, ty: Type) -> String {
        let mut k = self.temps.len();
        loop {
            let name = format!("_{prefix}{k}");
            if self.used.insert(name.clone()) {
                self.temps.push((name.clone(), ty));
                return name;
            }
            k += 1;
        }
    }

    fn ty(&self, name: &str) -> Type {
        self.table.get(name).map(|s| s.ty).unwrap_or(Type::Real)
    }

    /// Where the adjoint of `leaf` accumulates, if anywhere.
    fn target(&self, leaf: &Expr) -> Option<LValue> {
        match &leaf.kind {
            ExprKind::Var(n) => {
                if let Some(a) = self.adjoints.get(n) {
                    Some(LValue::scalar(a.clone()))
                } else if self.wrt_scalars.contains(n) {
                    Some(LValue::element(format!("_d_{n}"), c(0.0)))
                } else {
                    None
                }
            }
            ExprKind::Index(n, i) if self.wrt_arrays.contains(n) => Some(LValue::element(format!("_d_{n}"), (**i).clone())),
            _ => None,
        }
    }

    /// `target(u) += seed * ∂e/∂u` for every differentiable leaf `u` of `e`.
    fn accumulate(&self, e: &Expr, seed: Option<&Expr>, reuse: Option<(&Expr, &str)>, out: &mut Vec<Stmt>) -> Result<(), DiffError> {
        let mut leaves = Vec::new();
        real_leaves(e, &|l| self.target(l).is_some(), &mut leaves);
        for leaf in leaves {
            if let Some(p) = partial(e, leaf, reuse)? {
                let value = match seed {
                    Some(s) => mul(s.clone(), p),
                    None => p,
                };
                out.push(Stmt::assign(self.target(leaf).expect("filtered"), AssignOp::Add, value));
            }
        }
        Ok(())
    }

    fn restore(&self, name: &str, out: &mut Vec<Stmt>) {
        if self.taped.contains(name) {
            let stack = if self.ty(name) == Type::Int { TapeStack::Control } else { TapeStack::Value };
            out.push(Stmt::set(name, Expr::synth(ExprKind::Pop(stack))));
        }
    }

    fn save(&self, name: &str, out: &mut Vec<Stmt>) {
        if self.taped.contains(name) {
            let stack = if self.ty(name) == Type::Int { TapeStack::Control } else { TapeStack::Value };
            out.push(Stmt::push(stack, Expr::var(name)));
        }
    }

    /// Forward sweep and reverse sweep of a block. The reverse sweep holds
    /// the adjoint of each statement in reverse statement order.
    fn sweep(&mut self, body: &[Stmt]) -> Result<(Vec<Stmt>, Vec<Stmt>), DiffError> {
        let mut fwd = Vec::new();
        let mut parts = Vec::with_capacity(body.len());
        for s in body {
            let (f, r) = self.stmt(s)?;
            fwd.extend(f);
            parts.push(r);
        }
        Ok((fwd, parts.into_iter().rev().flatten().collect()))
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(Vec<Stmt>, Vec<Stmt>), DiffError> {
        let unsupported = |what: String| DiffError::Unsupported { span: s.span, what };
        match &s.kind {
            StmtKind::Decl { name, init, .. } => self.assign(name, AssignOp::Set, init, s.span),
            StmtKind::Assign { target, op, value } => {
                if self.table.get(&target.name).is_some_and(|sym| sym.kind == SymbolKind::Param) || target.index.is_some() {
                    return Err(unsupported(format!("an assignment to parameter `{}`", target.name)));
                }
                self.assign(&target.name, *op, value, s.span)
            }
            StmtKind::Return(e) => {
                let mut rev = Vec::new();
                self.accumulate(e, None, None, &mut rev)?;
                Ok((Vec::new(), rev))
            }
            StmtKind::If { cond, then_body, else_body } => {
                let (mut ft, rt) = self.sweep(then_body)?;
                let (mut fe, re) = self.sweep(else_body)?;
                if rt.is_empty() && re.is_empty() {
                    let f = Stmt::new(StmtKind::If { cond: cond.clone(), then_body: ft, else_body: fe }, s.span);
                    return Ok((vec![f], Vec::new()));
                }
                ft.push(Stmt::push(TapeStack::Control, c(1.0)));
                fe.push(Stmt::push(TapeStack::Control, c(0.0)));
                let f = Stmt::new(StmtKind::If { cond: cond.clone(), then_body: ft, else_body: fe }, s.span);
                let taken = Expr::synth(ExprKind::Compare(
                    CmpOp::Eq,
                    Box::new(Expr::synth(ExprKind::Pop(TapeStack::Control))),
                    Box::new(c(1.0)),
                ));
                let r = Stmt::synth(StmtKind::If { cond: taken, then_body: rt, else_body: re });
                Ok((vec![f], vec![r]))
            }
            StmtKind::For { var, start, end, dir, body } => {
                let (fb, rb) = self.sweep(body)?;
                if rb.is_empty() {
                    let f = StmtKind::For { var: var.clone(), start: start.clone(), end: end.clone(), dir: *dir, body: fb };
                    return Ok((vec![Stmt::new(f, s.span)], Vec::new()));
                }
                // Bounds are evaluated once, so recording both lets the
                // reverse sweep replay the exact index sequence backwards.
                let lo = self.temp("l", Type::Int);
                let hi = self.temp("t", Type::Int);
                let fwd = vec![
                    Stmt::set(lo.clone(), start.clone()),
                    Stmt::set(hi.clone(), end.clone()),
                    Stmt::new(
                        StmtKind::For { var: var.clone(), start: Expr::var(lo.clone()), end: Expr::var(hi.clone()), dir: *dir, body: fb },
                        s.span,
                    ),
                    Stmt::push(TapeStack::Control, Expr::var(lo.clone())),
                    Stmt::push(TapeStack::Control, Expr::var(hi.clone())),
                ];
                let (rstart, rend, rdir) = match dir {
                    // i = lo, ..., hi - 1  reversed:  hi - 1 down to lo
                    LoopDir::Up => (sub(Expr::var(hi.clone()), c(1.0)), Expr::var(lo.clone()), LoopDir::Down),
                    // i = lo, ..., hi (descending)  reversed:  hi up to lo
                    LoopDir::Down => (Expr::var(hi.clone()), add(Expr::var(lo.clone()), c(1.0)), LoopDir::Up),
                };
                let rev = vec![
                    Stmt::set(hi.clone(), Expr::synth(ExprKind::Pop(TapeStack::Control))),
                    Stmt::set(lo.clone(), Expr::synth(ExprKind::Pop(TapeStack::Control))),
                    Stmt::synth(StmtKind::For { var: var.clone(), start: rstart, end: rend, dir: rdir, body: rb }),
                ];
                Ok((fwd, rev))
            }
            StmtKind::Call { name, .. } => Err(unsupported(format!("the call statement `{name}(...)`"))),
            StmtKind::Push(..) => Err(unsupported("explicit tape operations in the primal".into())),
        }
    }

    fn assign(&mut self, v: &str, op: AssignOp, value: &Expr, span: Span) -> Result<(Vec<Stmt>, Vec<Stmt>), DiffError> {
        if matches!(value.kind, ExprKind::Pop(_)) || has_pop(value) {
            return Err(DiffError::Unsupported { span, what: "explicit tape operations in the primal".into() });
        }
        let mut fwd = Vec::new();
        self.save(v, &mut fwd);
        fwd.push(Stmt::new(StmtKind::Assign { target: LValue::scalar(v), op, value: value.clone() }, span));

        let mut rev = Vec::new();
        let Some(adj) = self.adjoints.get(v).cloned() else {
            self.restore(v, &mut rev);
            return Ok((fwd, rev));
        };
        let adj_e = Expr::var(adj.clone());
        match op {
            // v += e with e independent of v: the adjoint of v flows to e and
            // also stays with the old v unchanged.
            AssignOp::Add if !value.reads_name(v) => {
                self.accumulate(value, Some(&adj_e), None, &mut rev)?;
                self.restore(v, &mut rev);
            }
            _ => {
                let rhs = match op {
                    AssignOp::Set => value.clone(),
                    AssignOp::Add => add_raw(Expr::var(v), value.clone()),
                };
                if rhs.reads_name(v) {
                    // The partials need the old v, and they feed back into _d_v.
                    self.restore(v, &mut rev);
                    let r = self.temp("r", Type::Real);
                    rev.push(Stmt::set(r.clone(), adj_e));
                    rev.push(Stmt::set(adj.clone(), c(0.0)));
                    self.accumulate(&rhs, Some(&Expr::var(r)), None, &mut rev)?;
                } else {
                    self.accumulate(&rhs, Some(&adj_e), Some((&rhs, v)), &mut rev)?;
                    rev.push(Stmt::set(adj.clone(), c(0.0)));
                    self.restore(v, &mut rev);
                }
            }
        }
        Ok((fwd, rev))
    }
}

fn add_raw(a: Expr, b: Expr) -> Expr {
    Expr::synth(ExprKind::Binary(BinOp::Add, Box::new(a), Box::new(b)))
}

fn has_pop(e: &Expr) -> bool {
    let mut hit = false;
    e.walk(&mut |n| hit |= matches!(n.kind, ExprKind::Pop(_)));
    hit
}
