use std::collections::HashMap;

use crate::dsl::ast::*;
use crate::error::SemanticError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Param,
    Local,
    LoopVar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Symbol {
    pub kind: SymbolKind,
    pub ty: Type,
    pub span: Span,
}

/// Every name a function binds, in declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymbolTable {
    entries: Vec<(String, Symbol)>,
}

impl SymbolTable {
    pub fn get(&self, name: &str) -> Option<&Symbol> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Symbol)> {
        self.entries.iter().map(|(n, s)| (n.as_str(), s))
    }

    pub fn locals(&self) -> impl Iterator<Item = (&str, &Symbol)> {
        self.iter().filter(|(_, s)| s.kind == SymbolKind::Local)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn insert(&mut self, name: &str, sym: Symbol) {
        if self.get(name).is_none() {
            self.entries.push((name.to_string(), sym));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ValTy {
    Real,
    Int,
    Bool,
    Array,
}

/// Signatures of callable user functions, for statement calls.
type Signatures<'a> = HashMap<&'a str, &'a FunctionDef>;

/// Resolve and check a single function in isolation (call statements are
/// only checked for arity/types by [`check_module`]).
pub fn resolve(f: &FunctionDef) -> Result<SymbolTable, SemanticError> {
    Checker::new(f, None).run()
}

pub fn check_function(f: &FunctionDef, module: &Module) -> Result<SymbolTable, SemanticError> {
    let sigs: Signatures = module.functions.iter().map(|g| (g.name.as_str(), g)).collect();
    Checker::new(f, Some(&sigs)).run()
}

/// Check every function of a module; returns one symbol table per function.
pub fn check_module(m: &Module) -> Result<Vec<SymbolTable>, SemanticError> {
    let mut seen: HashMap<&str, Span> = HashMap::new();
    for f in &m.functions {
        if seen.insert(&f.name, f.span).is_some() {
            return Err(SemanticError::DuplicateFunction { span: f.span, name: f.name.clone() });
        }
    }
    m.functions.iter().map(|f| check_function(f, m)).collect()
}

struct Checker<'a> {
    f: &'a FunctionDef,
    sigs: Option<&'a Signatures<'a>>,
    table: SymbolTable,
    scopes: Vec<HashMap<String, Symbol>>,
    /// Every local and param ever declared, for the no-redeclaration rule.
    declared: HashMap<String, Span>,
    loop_vars: Vec<String>,
}

impl<'a> Checker<'a> {
    fn new(f: &'a FunctionDef, sigs: Option<&'a Signatures<'a>>) -> Self {
        Checker { f, sigs, table: SymbolTable::default(), scopes: vec![HashMap::new()], declared: HashMap::new(), loop_vars: Vec::new() }
    }

    fn run(mut self) -> Result<SymbolTable, SemanticError> {
        let f = self.f;
        if f.is_global() && f.qualifiers.len() > 1 {
            return Err(SemanticError::GlobalNotExclusive { span: f.span, name: f.name.clone() });
        }
        if f.is_global() && f.ret != ReturnType::Void {
            return Err(SemanticError::KernelReturnsValue { span: f.span, name: f.name.clone() });
        }
        for p in &f.params {
            self.declare(&p.name, SymbolKind::Param, p.ty, p.span)?;
        }
        self.check_returns()?;
        self.block(&f.body)?;
        Ok(self.table)
    }

    fn declare(&mut self, name: &str, kind: SymbolKind, ty: Type, span: Span) -> Result<(), SemanticError> {
        if name == PI_NAME || THREAD_BUILTINS.contains(&name) {
            return Err(SemanticError::Duplicate { span, name: name.into(), previous: Span::default() });
        }
        if kind == SymbolKind::LoopVar {
            // Sibling loops may reuse a name; nesting or clashing with a local may not.
            if let Some(prev) = self.declared.get(name) {
                return Err(SemanticError::Duplicate { span, name: name.into(), previous: *prev });
            }
            if self.lookup(name).is_some() {
                let previous = self.lookup(name).map(|s| s.span).unwrap_or_default();
                return Err(SemanticError::Duplicate { span, name: name.into(), previous });
            }
        } else {
            if let Some(prev) = self.declared.get(name) {
                return Err(SemanticError::Duplicate { span, name: name.into(), previous: *prev });
            }
            if self.table.get(name).is_some_and(|s| s.kind == SymbolKind::LoopVar) {
                let previous = self.table.get(name).map(|s| s.span).unwrap_or_default();
                return Err(SemanticError::Duplicate { span, name: name.into(), previous });
            }
            self.declared.insert(name.to_string(), span);
        }
        let sym = Symbol { kind, ty, span };
        self.table.insert(name, sym.clone());
        self.scopes.last_mut().expect("scope").insert(name.to_string(), sym);
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<&Symbol> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn with_scope<T>(&mut self, body: impl FnOnce(&mut Self) -> Result<T, SemanticError>) -> Result<T, SemanticError> {
        self.scopes.push(HashMap::new());
        let r = body(self);
        self.scopes.pop();
        r
    }

    fn block(&mut self, body: &[Stmt]) -> Result<(), SemanticError> {
        for s in body {
            self.stmt(s)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), SemanticError> {
        match &s.kind {
            StmtKind::Decl { name, ty, init } => {
                self.numeric(init)?;
                self.declare(name, SymbolKind::Local, *ty, s.span)?;
            }
            StmtKind::Assign { target, value, .. } => {
                self.numeric(value)?;
                let sym = self
                    .lookup(&target.name)
                    .cloned()
                    .ok_or_else(|| self.undefined(&target.name, s.span))?;
                if sym.kind == SymbolKind::LoopVar {
                    return Err(SemanticError::LoopVarAssigned { span: s.span, name: target.name.clone() });
                }
                match (&target.index, sym.ty) {
                    (Some(idx), Type::RealArray) => {
                        self.numeric(idx)?;
                    }
                    (None, Type::RealArray) => return Err(type_err(s.span, format!("cannot assign to array `{}` as a whole", target.name))),
                    (Some(_), _) => return Err(type_err(s.span, format!("`{}` is not an array", target.name))),
                    (None, _) => {}
                }
            }
            StmtKind::Return(e) => {
                if self.f.ret == ReturnType::Void {
                    return Err(SemanticError::ControlFlow { span: s.span, message: format!("void function `{}` cannot return a value", self.f.name) });
                }
                self.numeric(e)?;
            }
            StmtKind::If { cond, then_body, else_body } => {
                match &cond.kind {
                    ExprKind::Compare(_, a, b) => {
                        self.numeric(a)?;
                        self.numeric(b)?;
                    }
                    _ => return Err(type_err(cond.span, "condition must be a comparison".into())),
                }
                self.with_scope(|c| c.block(then_body))?;
                self.with_scope(|c| c.block(else_body))?;
            }
            StmtKind::For { var, start, end, body, .. } => {
                self.numeric(start)?;
                self.numeric(end)?;
                self.with_scope(|c| {
                    c.declare(var, SymbolKind::LoopVar, Type::Int, s.span)?;
                    c.loop_vars.push(var.clone());
                    let r = c.block(body);
                    c.loop_vars.pop();
                    r
                })?;
            }
            StmtKind::Call { name, args } => self.call(name, args, s.span)?,
            StmtKind::Push(_, e) => {
                self.numeric(e)?;
            }
        }
        Ok(())
    }

    fn call(&mut self, name: &str, args: &[Expr], span: Span) -> Result<(), SemanticError> {
        let Some(sigs) = self.sigs else {
            // Standalone resolution: only check that arguments resolve.
            for a in args {
                self.any(a)?;
            }
            return Ok(());
        };
        let callee = sigs.get(name).ok_or_else(|| SemanticError::UnknownCallee { span, name: name.into() })?;
        if callee.is_global() {
            return Err(type_err(span, format!("kernel `{name}` cannot be called")));
        }
        if callee.params.len() != args.len() {
            return Err(SemanticError::CallArity { span, name: name.into(), expected: callee.params.len(), found: args.len() });
        }
        for (p, a) in callee.params.iter().zip(args) {
            match p.ty {
                Type::RealArray => match &a.kind {
                    ExprKind::Var(n) if self.ty_of_name(n, a.span)? == ValTy::Array => {}
                    ExprKind::Index(n, i) => {
                        self.expect_array(n, a.span)?;
                        self.numeric(i)?;
                    }
                    _ => return Err(type_err(a.span, format!("argument for `{}` must be an array or array element", p.name))),
                },
                _ => {
                    self.numeric(a)?;
                }
            }
        }
        Ok(())
    }

    fn undefined(&self, name: &str, span: Span) -> SemanticError {
        SemanticError::Undefined { span, name: name.into() }
    }

    fn ty_of_name(&self, name: &str, span: Span) -> Result<ValTy, SemanticError> {
        if name == PI_NAME {
            return Ok(ValTy::Real);
        }
        if THREAD_BUILTINS.contains(&name) {
            if !self.f.is_global() {
                return Err(type_err(span, format!("`{name}` is only available in global kernels")));
            }
            return Ok(ValTy::Int);
        }
        let sym = self.lookup(name).ok_or_else(|| self.undefined(name, span))?;
        Ok(match sym.ty {
            Type::Real => ValTy::Real,
            Type::Int => ValTy::Int,
            Type::RealArray => ValTy::Array,
        })
    }

    fn expect_array(&self, name: &str, span: Span) -> Result<(), SemanticError> {
        match self.ty_of_name(name, span)? {
            ValTy::Array => Ok(()),
            _ => Err(type_err(span, format!("`{name}` is not an array"))),
        }
    }

    fn numeric(&self, e: &Expr) -> Result<ValTy, SemanticError> {
        match self.any(e)? {
            t @ (ValTy::Real | ValTy::Int) => Ok(t),
            ValTy::Bool => Err(type_err(e.span, "comparison used as a value".into())),
            ValTy::Array => Err(type_err(e.span, "array used as a scalar".into())),
        }
    }

    fn any(&self, e: &Expr) -> Result<ValTy, SemanticError> {
        Ok(match &e.kind {
            ExprKind::Const(_) => ValTy::Real,
            ExprKind::Var(n) => self.ty_of_name(n, e.span)?,
            ExprKind::Neg(a) => self.numeric(a)?,
            ExprKind::Binary(op, a, b) => {
                let (ta, tb) = (self.numeric(a)?, self.numeric(b)?);
                if ta == ValTy::Int && tb == ValTy::Int && *op != BinOp::Div {
                    ValTy::Int
                } else {
                    ValTy::Real
                }
            }
            ExprKind::Compare(_, a, b) => {
                self.numeric(a)?;
                self.numeric(b)?;
                ValTy::Bool
            }
            ExprKind::Call(_, args) => {
                for a in args {
                    self.numeric(a)?;
                }
                ValTy::Real
            }
            ExprKind::Index(n, i) => {
                self.expect_array(n, e.span)?;
                self.numeric(i)?;
                ValTy::Real
            }
            ExprKind::Pop(TapeStack::Value) => ValTy::Real,
            ExprKind::Pop(TapeStack::Control) => ValTy::Int,
        })
    }

    /// Returns may only end a path: last statement of a block, never inside a
    /// loop, and an `if` holding a return must return on both branches.
    fn check_returns(&self) -> Result<(), SemanticError> {
        let f = self.f;
        if f.ret == ReturnType::Void {
            let mut found = None;
            walk_stmts(&f.body, &mut |s| {
                if matches!(s.kind, StmtKind::Return(_)) && found.is_none() {
                    found = Some(s.span);
                }
            });
            if let Some(span) = found {
                return Err(SemanticError::ControlFlow { span, message: format!("void function `{}` cannot return a value", f.name) });
            }
            return Ok(());
        }
        check_block_returns(&f.body, false)?;
        if !terminates(&f.body) {
            return Err(SemanticError::ControlFlow { span: f.span, message: format!("not every path through `{}` ends in a return", f.name) });
        }
        Ok(())
    }
}

fn type_err(span: Span, message: String) -> SemanticError {
    SemanticError::Type { span, message }
}

fn contains_return(body: &[Stmt]) -> bool {
    let mut hit = false;
    walk_stmts(body, &mut |s| hit |= matches!(s.kind, StmtKind::Return(_)));
    hit
}

/// True when every path through `body` ends in a return.
pub(crate) fn terminates(body: &[Stmt]) -> bool {
    match body.last().map(|s| &s.kind) {
        Some(StmtKind::Return(_)) => true,
        Some(StmtKind::If { then_body, else_body, .. }) => terminates(then_body) && terminates(else_body),
        _ => false,
    }
}

fn check_block_returns(body: &[Stmt], in_loop: bool) -> Result<(), SemanticError> {
    for (i, s) in body.iter().enumerate() {
        let last = i + 1 == body.len();
        match &s.kind {
            StmtKind::Return(_) => {
                if in_loop {
                    return Err(SemanticError::ControlFlow { span: s.span, message: "return inside a loop".into() });
                }
                if !last {
                    return Err(SemanticError::ControlFlow { span: s.span, message: "statements after return".into() });
                }
            }
            StmtKind::If { then_body, else_body, .. } => {
                if contains_return(then_body) || contains_return(else_body) {
                    if in_loop || !last || !terminates(then_body) || !terminates(else_body) {
                        return Err(SemanticError::ControlFlow {
                            span: s.span,
                            message: "an `if` that returns must be the last statement and return on both branches".into(),
                        });
                    }
                }
                check_block_returns(then_body, in_loop)?;
                check_block_returns(else_body, in_loop)?;
            }
            StmtKind::For { body, .. } => check_block_returns(body, true)?,
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn first(src: &str) -> FunctionDef {
        parse(src).unwrap().functions.remove(0)
    }

    #[test]
    fn gauss_symbols() {
        let f = first("device host real gauss(real x, real p, real sigma) { real t = -(x-p)*(x-p)/(2*sigma*sigma); return pow(2*PI, -0.5) * pow(sigma, -0.5) * exp(t); }");
        let t = resolve(&f).unwrap();
        let names: Vec<_> = t.iter().map(|(n, s)| (n, s.kind)).collect();
        assert_eq!(
            names,
            vec![("x", SymbolKind::Param), ("p", SymbolKind::Param), ("sigma", SymbolKind::Param), ("t", SymbolKind::Local)]
        );
    }

    #[test]
    fn undefined_variable() {
        let err = resolve(&first("real f(real x){ return y; }")).unwrap_err();
        assert!(matches!(err, SemanticError::Undefined { ref name, .. } if name == "y"));
    }

    #[test]
    fn duplicate_declaration() {
        let err = resolve(&first("real f(real x){ real x = 1; return x; }")).unwrap_err();
        assert!(matches!(err, SemanticError::Duplicate { ref name, .. } if name == "x"));
        let err = resolve(&first("real f(real x){ if (x < 0) { real a = 1; } else { real a = 2; } return x; }")).unwrap_err();
        assert!(matches!(err, SemanticError::Duplicate { .. }));
    }

    #[test]
    fn sibling_loops_share_a_variable_name() {
        let f = first("real f(int n){ real s = 0; for (int i = 0; i < n; i++) { s += 1; } for (int i = 0; i < n; i++) { s += 2; } return s; }");
        assert!(resolve(&f).is_ok());
        let nested = first("real f(int n){ real s = 0; for (int i = 0; i < n; i++) { for (int i = 0; i < n; i++) { s += 1; } } return s; }");
        assert!(resolve(&nested).is_err());
    }

    #[test]
    fn block_scoping() {
        let err = resolve(&first("real f(real x){ if (x < 0) { real a = 1; } else { } return a; }")).unwrap_err();
        assert!(matches!(err, SemanticError::Undefined { .. }));
    }

    #[test]
    fn loop_variable_is_read_only() {
        let err = resolve(&first("real f(int n){ for (int i = 0; i < n; i++) { i = 2; } return 0; }")).unwrap_err();
        assert!(matches!(err, SemanticError::LoopVarAssigned { .. }));
    }

    #[test]
    fn return_placement() {
        assert!(resolve(&first("real f(real x){ if (x < 0) { return -x; } else { return x; } }")).is_ok());
        assert!(resolve(&first("real f(real x){ if (x < 0) { return -x; } return x; }")).is_err());
        assert!(resolve(&first("real f(real x){ real y = x; }")).is_err());
        assert!(resolve(&first("real f(int n){ for (int i = 0; i < n; i++) { return 1; } return 0; }")).is_err());
        assert!(resolve(&first("void f(real x){ return x; }")).is_err());
    }

    #[test]
    fn kernel_rules() {
        assert!(resolve(&first("global device void k(real[] x) { }")).is_err());
        assert!(resolve(&first("global real k(real x) { return x; }")).is_err());
        assert!(resolve(&first("global void k(real[] x, int N) { int i = blockIdx.x * blockDim.x + threadIdx.x; if (i < N) { x[i] = 0; } }")).is_ok());
        assert!(resolve(&first("real f(real x) { return x * threadIdx.x; }")).is_err());
    }

    #[test]
    fn type_errors() {
        assert!(resolve(&first("real f(real[] a){ return a; }")).is_err());
        assert!(resolve(&first("real f(real a){ return a[0]; }")).is_err());
        assert!(resolve(&first("real f(real a){ if (a) { return 1; } else { return 2; } }")).is_err());
        assert!(resolve(&first("real f(real a){ real b = a < 1; return b; }")).is_err());
    }

    #[test]
    fn module_checks_calls() {
        let m = parse("device void g(real x, real[] d) { d[0] += x; } global void k(real[] x, real[] d, int N) { int i = threadIdx.x; if (i < N) { g(x[i], d[i]); } }").unwrap();
        assert!(check_module(&m).is_ok());
        let bad = parse("global void k(real[] x) { h(x); }").unwrap();
        assert!(matches!(check_module(&bad), Err(SemanticError::UnknownCallee { .. })));
        let arity = parse("device void g(real x) { } global void k(real[] x) { g(x[0], x[1]); }").unwrap();
        assert!(matches!(check_module(&arity), Err(SemanticError::CallArity { .. })));
        let dup = parse("real f() { return 0; } real f() { return 1; }").unwrap();
        assert!(matches!(check_module(&dup), Err(SemanticError::DuplicateFunction { .. })));
    }
}
