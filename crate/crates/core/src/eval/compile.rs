//! Lowering from the syntax tree to a slot-addressed tree the machine walks.

use std::collections::HashMap;

use crate::dsl::ast::*;
use crate::error::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ThreadVar {
    BlockIdx,
    BlockDim,
    ThreadIdx,
    GridDim,
}

#[derive(Debug, Clone)]
pub(crate) enum CExpr {
    Const(f64),
    Slot(u32),
    Thread(ThreadVar),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>, Span),
    Cmp(CmpOp, Box<CExpr>, Box<CExpr>),
    Call(Intrinsic, Box<CExpr>, Span),
    Pow(Box<CExpr>, Box<CExpr>, Span),
    Index(u32, Box<CExpr>, Span),
    Pop(TapeStack, Span),
}

#[derive(Debug, Clone)]
pub(crate) enum CArg {
    Value(CExpr),
    Whole(u32),
    Element(u32, CExpr, Span),
}

#[derive(Debug, Clone)]
pub(crate) enum CStmt {
    Set { slot: u32, op: AssignOp, value: CExpr },
    SetElem { slot: u32, index: CExpr, op: AssignOp, value: CExpr, span: Span },
    Return(CExpr),
    If { cond: CExpr, then_body: Vec<CStmt>, else_body: Vec<CStmt> },
    For { slot: u32, start: CExpr, end: CExpr, dir: LoopDir, body: Vec<CStmt>, span: Span },
    Call { callee: usize, args: Vec<CArg> },
    Push(TapeStack, CExpr),
}

#[derive(Debug, Clone)]
pub(crate) struct CFunction {
    pub name: String,
    pub params: Vec<Param>,
    pub returns_value: bool,
    /// Type of every slot; params occupy the first `params.len()` slots.
    pub slot_types: Vec<Type>,
    pub slot_names: Vec<String>,
    pub body: Vec<CStmt>,
    pub span: Span,
}

pub(crate) fn compile_function(f: &FunctionDef, fn_ids: &HashMap<&str, usize>) -> Result<CFunction, EvalError> {
    let mut c = Compiler { slots: HashMap::new(), slot_types: Vec::new(), slot_names: Vec::new(), fn_ids };
    for p in &f.params {
        c.slot(&p.name, p.ty);
    }
    let body = c.block(&f.body)?;
    Ok(CFunction {
        name: f.name.clone(),
        params: f.params.clone(),
        returns_value: f.ret == ReturnType::Real,
        slot_types: c.slot_types,
        slot_names: c.slot_names,
        body,
        span: f.span,
    })
}

struct Compiler<'a> {
    slots: HashMap<String, u32>,
    slot_types: Vec<Type>,
    slot_names: Vec<String>,
    fn_ids: &'a HashMap<&'a str, usize>,
}

impl Compiler<'_> {
    fn slot(&mut self, name: &str, ty: Type) -> u32 {
        if let Some(&s) = self.slots.get(name) {
            return s;
        }
        let s = self.slot_types.len() as u32;
        self.slots.insert(name.to_string(), s);
        self.slot_types.push(ty);
        self.slot_names.push(name.to_string());
        s
    }

    fn lookup(&self, name: &str, span: Span) -> Result<u32, EvalError> {
        self.slots
            .get(name)
            .copied()
            .ok_or_else(|| EvalError::Invalid { span, message: format!("unresolved name `{name}`") })
    }

    fn block(&mut self, body: &[Stmt]) -> Result<Vec<CStmt>, EvalError> {
        body.iter().map(|s| self.stmt(s)).collect()
    }

    fn stmt(&mut self, s: &Stmt) -> Result<CStmt, EvalError> {
        Ok(match &s.kind {
            StmtKind::Decl { name, ty, init } => {
                let value = self.expr(init)?;
                let slot = self.slot(name, *ty);
                CStmt::Set { slot, op: AssignOp::Set, value }
            }
            StmtKind::Assign { target, op, value } => {
                let value = self.expr(value)?;
                let slot = self.lookup(&target.name, s.span)?;
                match &target.index {
                    Some(idx) => CStmt::SetElem { slot, index: self.expr(idx)?, op: *op, value, span: s.span },
                    None => CStmt::Set { slot, op: *op, value },
                }
            }
            StmtKind::Return(e) => CStmt::Return(self.expr(e)?),
            StmtKind::If { cond, then_body, else_body } => CStmt::If {
                cond: self.expr(cond)?,
                then_body: self.block(then_body)?,
                else_body: self.block(else_body)?,
            },
            StmtKind::For { var, start, end, dir, body } => {
                let start = self.expr(start)?;
                let end = self.expr(end)?;
                let slot = self.slot(var, Type::Int);
                CStmt::For { slot, start, end, dir: *dir, body: self.block(body)?, span: s.span }
            }
            StmtKind::Call { name, args } => {
                let callee = *self
                    .fn_ids
                    .get(name.as_str())
                    .ok_or_else(|| EvalError::UnknownFunction(name.clone()))?;
                let args = args
                    .iter()
                    .map(|a| {
                        Ok(match &a.kind {
                            ExprKind::Var(n) if self.is_array(n) => CArg::Whole(self.lookup(n, a.span)?),
                            ExprKind::Index(n, i) => CArg::Element(self.lookup(n, a.span)?, self.expr(i)?, a.span),
                            _ => CArg::Value(self.expr(a)?),
                        })
                    })
                    .collect::<Result<_, EvalError>>()?;
                CStmt::Call { callee, args }
            }
            StmtKind::Push(stack, e) => CStmt::Push(*stack, self.expr(e)?),
        })
    }

    fn is_array(&self, name: &str) -> bool {
        self.slots.get(name).is_some_and(|&s| self.slot_types[s as usize] == Type::RealArray)
    }

    fn expr(&mut self, e: &Expr) -> Result<CExpr, EvalError> {
        Ok(match &e.kind {
            ExprKind::Const(c) => CExpr::Const(*c),
            ExprKind::Var(n) => match n.as_str() {
                PI_NAME => CExpr::Const(std::f64::consts::PI),
                "blockIdx.x" => CExpr::Thread(ThreadVar::BlockIdx),
                "blockDim.x" => CExpr::Thread(ThreadVar::BlockDim),
                "threadIdx.x" => CExpr::Thread(ThreadVar::ThreadIdx),
                "gridDim.x" => CExpr::Thread(ThreadVar::GridDim),
                _ => CExpr::Slot(self.lookup(n, e.span)?),
            },
            ExprKind::Neg(a) => CExpr::Neg(Box::new(self.expr(a)?)),
            ExprKind::Binary(op, a, b) => CExpr::Bin(*op, Box::new(self.expr(a)?), Box::new(self.expr(b)?), e.span),
            ExprKind::Compare(op, a, b) => CExpr::Cmp(*op, Box::new(self.expr(a)?), Box::new(self.expr(b)?)),
            ExprKind::Call(Intrinsic::Pow, args) => {
                CExpr::Pow(Box::new(self.expr(&args[0])?), Box::new(self.expr(&args[1])?), e.span)
            }
            ExprKind::Call(f, args) => CExpr::Call(*f, Box::new(self.expr(&args[0])?), e.span),
            ExprKind::Index(n, i) => CExpr::Index(self.lookup(n, e.span)?, Box::new(self.expr(i)?), e.span),
            ExprKind::Pop(stack) => CExpr::Pop(*stack, e.span),
        })
    }
}
