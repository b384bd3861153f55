//! Syntax tree for the differentiable DSL.
//!
//! Every node carries a [`Span`] for diagnostics. Spans never take part in
//! equality: two trees compare equal when they have the same shape, names and
//! constants, which is what round-trip and golden tests need.

use std::collections::BTreeSet;
use std::fmt;

/// Source position (1-based line and column).
#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _other: &Span) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Qualifier {
    Device,
    Host,
    Global,
}

impl Qualifier {
    pub fn keyword(self) -> &'static str {
        match self {
            Qualifier::Device => "device",
            Qualifier::Host => "host",
            Qualifier::Global => "global",
        }
    }
}

/// Qualifier set of a function. Empty means an ordinary host-side function.
pub type Qualifiers = BTreeSet<Qualifier>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Type {
    Real,
    RealArray,
    Int,
}

impl Type {
    pub fn keyword(self) -> &'static str {
        match self {
            Type::Real => "real",
            Type::RealArray => "real[]",
            Type::Int => "int",
        }
    }

    /// Real scalars and real arrays can be differentiated.
    pub fn is_real(self) -> bool {
        matches!(self, Type::Real | Type::RealArray)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReturnType {
    Real,
    Void,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

/// Elementary functions callable from expressions.
///
/// `Sign` is not part of the user-facing alphabet in the usual sense but it
/// is what the derivative of `fabs` is written in, so generated code needs it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Intrinsic {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Pow,
    Fabs,
    Sign,
}

impl Intrinsic {
    pub const ALL: [Intrinsic; 9] = [
        Intrinsic::Sin,
        Intrinsic::Cos,
        Intrinsic::Tan,
        Intrinsic::Exp,
        Intrinsic::Log,
        Intrinsic::Sqrt,
        Intrinsic::Pow,
        Intrinsic::Fabs,
        Intrinsic::Sign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Intrinsic::Sin => "sin",
            Intrinsic::Cos => "cos",
            Intrinsic::Tan => "tan",
            Intrinsic::Exp => "exp",
            Intrinsic::Log => "log",
            Intrinsic::Sqrt => "sqrt",
            Intrinsic::Pow => "pow",
            Intrinsic::Fabs => "fabs",
            Intrinsic::Sign => "sign",
        }
    }

    pub fn from_name(name: &str) -> Option<Intrinsic> {
        Intrinsic::ALL.into_iter().find(|i| i.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            Intrinsic::Pow => 2,
            _ => 1,
        }
    }
}

/// The two tape stacks: values saved before overwrites, and control data
/// (branch outcomes, loop bounds and trip counts).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TapeStack {
    Value,
    Control,
}

impl TapeStack {
    pub fn push_name(self) -> &'static str {
        match self {
            TapeStack::Value => "__push",
            TapeStack::Control => "__pushc",
        }
    }

    pub fn pop_name(self) -> &'static str {
        match self {
            TapeStack::Value => "__pop",
            TapeStack::Control => "__popc",
        }
    }
}

/// Name of the built-in constant for pi.
pub const PI_NAME: &str = "PI";

/// Thread-index builtins visible inside `global` functions.
pub const THREAD_BUILTINS: [&str; 4] = ["blockIdx.x", "blockDim.x", "threadIdx.x", "gridDim.x"];

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Const(f64),
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    Call(Intrinsic, Vec<Expr>),
    Index(String, Box<Expr>),
    Pop(TapeStack),
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    /// Expression with no meaningful source position (generated code).
    pub fn synth(kind: ExprKind) -> Self {
        Expr { kind, span: Span::default() }
    }

    pub fn constant(v: f64) -> Self {
        Expr::synth(ExprKind::Const(v))
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::synth(ExprKind::Var(name.into()))
    }

    pub fn index(name: impl Into<String>, idx: Expr) -> Self {
        Expr::synth(ExprKind::Index(name.into(), Box::new(idx)))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.kind {
            ExprKind::Const(c) => Some(c),
            _ => None,
        }
    }

    /// Visit every sub-expression in pre-order, including `self`.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Const(_) | ExprKind::Var(_) | ExprKind::Pop(_) => {}
            ExprKind::Neg(a) => a.walk(f),
            ExprKind::Binary(_, a, b) | ExprKind::Compare(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::Call(_, args) => args.iter().for_each(|a| a.walk(f)),
            ExprKind::Index(_, i) => i.walk(f),
        }
    }

    /// Names read by this expression, arrays included (by array name).
    pub fn reads(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| match &e.kind {
            ExprKind::Var(n) => {
                out.insert(n.clone());
            }
            ExprKind::Index(n, _) => {
                out.insert(n.clone());
            }
            _ => {}
        });
        out
    }

    pub fn reads_name(&self, name: &str) -> bool {
        let mut hit = false;
        self.walk(&mut |e| match &e.kind {
            ExprKind::Var(n) | ExprKind::Index(n, _) if n == name => hit = true,
            _ => {}
        });
        hit
    }

    /// Number of nodes, used to keep generated expressions in check.
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssignOp {
    Set,
    Add,
}

impl AssignOp {
    pub fn symbol(self) -> &'static str {
        match self {
            AssignOp::Set => "=",
            AssignOp::Add => "+=",
        }
    }
}

/// Assignment destination: a scalar variable or one array element.
#[derive(Debug, Clone, PartialEq)]
pub struct LValue {
    pub name: String,
    pub index: Option<Expr>,
}

impl LValue {
    pub fn scalar(name: impl Into<String>) -> Self {
        LValue { name: name.into(), index: None }
    }

    pub fn element(name: impl Into<String>, index: Expr) -> Self {
        LValue { name: name.into(), index: Some(index) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoopDir {
    /// `for (int i = a; i < b; i++)`
    Up,
    /// `for (int i = a; i >= b; i--)`
    Down,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Decl { name: String, ty: Type, init: Expr },
    Assign { target: LValue, op: AssignOp, value: Expr },
    Return(Expr),
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Vec<Stmt> },
    For { var: String, start: Expr, end: Expr, dir: LoopDir, body: Vec<Stmt> },
    /// Call of a user function as a statement (kernels calling device code).
    Call { name: String, args: Vec<Expr> },
    Push(TapeStack, Expr),
}

impl Stmt {
    pub fn new(kind: StmtKind, span: Span) -> Self {
        Stmt { kind, span }
    }

    pub fn synth(kind: StmtKind) -> Self {
        Stmt { kind, span: Span::default() }
    }

    pub fn decl(name: impl Into<String>, ty: Type, init: Expr) -> Self {
        Stmt::synth(StmtKind::Decl { name: name.into(), ty, init })
    }

    pub fn assign(target: LValue, op: AssignOp, value: Expr) -> Self {
        Stmt::synth(StmtKind::Assign { target, op, value })
    }

    pub fn set(name: impl Into<String>, value: Expr) -> Self {
        Stmt::assign(LValue::scalar(name), AssignOp::Set, value)
    }

    pub fn push(stack: TapeStack, value: Expr) -> Self {
        Stmt::synth(StmtKind::Push(stack, value))
    }
}

/// Visit every statement in a block recursively, pre-order.
pub fn walk_stmts<'a>(body: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for s in body {
        f(s);
        match &s.kind {
            StmtKind::If { then_body, else_body, .. } => {
                walk_stmts(then_body, f);
                walk_stmts(else_body, f);
            }
            StmtKind::For { body, .. } => walk_stmts(body, f),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
    pub span: Span,
}

impl Param {
    pub fn new(name: impl Into<String>, ty: Type) -> Self {
        Param { name: name.into(), ty, span: Span::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub qualifiers: Qualifiers,
    pub ret: ReturnType,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

impl FunctionDef {
    pub fn is_global(&self) -> bool {
        self.qualifiers.contains(&Qualifier::Global)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Module {
    pub functions: Vec<FunctionDef>,
}

impl Module {
    pub fn new(functions: Vec<FunctionDef>) -> Self {
        Module { functions }
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}
