use thiserror::Error;

use crate::dsl::ast::Span;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{span}: syntax error: expected {expected}, found {found}")]
    Syntax { span: Span, expected: String, found: String },
    #[error("{span}: invalid character `{ch}`")]
    Lex { span: Span, ch: char },
    #[error("{span}: `{name}` takes {expected} argument(s), got {found}")]
    Arity { span: Span, name: String, expected: usize, found: usize },
    #[error("{span}: `{name}` is not an intrinsic; only intrinsics may be called inside expressions")]
    UnknownFunction { span: Span, name: String },
}

impl ParseError {
    pub fn span(&self) -> Span {
        match self {
            ParseError::Syntax { span, .. }
            | ParseError::Lex { span, .. }
            | ParseError::Arity { span, .. }
            | ParseError::UnknownFunction { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticError {
    #[error("{span}: undefined variable `{name}`")]
    Undefined { span: Span, name: String },
    #[error("{span}: `{name}` is already declared (first declared at {previous})")]
    Duplicate { span: Span, name: String, previous: Span },
    #[error("{span}: function `{name}` is defined more than once")]
    DuplicateFunction { span: Span, name: String },
    #[error("{span}: `global` cannot be combined with other qualifiers on `{name}`")]
    GlobalNotExclusive { span: Span, name: String },
    #[error("{span}: kernel `{name}` must return void")]
    KernelReturnsValue { span: Span, name: String },
    #[error("{span}: type error: {message}")]
    Type { span: Span, message: String },
    #[error("{span}: {message}")]
    ControlFlow { span: Span, message: String },
    #[error("{span}: loop variable `{name}` is assigned inside its loop")]
    LoopVarAssigned { span: Span, name: String },
    #[error("{span}: call to unknown function `{name}`")]
    UnknownCallee { span: Span, name: String },
    #[error("{span}: `{name}` expects {expected} argument(s), got {found}")]
    CallArity { span: Span, name: String, expected: usize, found: usize },
    #[error("`{name}` is not a parameter of `{function}`")]
    UnknownParameter { name: String, function: String },
    #[error("parameter `{name}` of `{function}` is not real-typed")]
    NonRealParameter { name: String, function: String },
    #[error("`{name}` is a global kernel; differentiating kernels is not supported")]
    KernelNotDifferentiable { name: String },
    #[error("no function named `{name}`")]
    UnknownFunction { name: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error("at least one independent parameter is required")]
    EmptyWrt,
    #[error("{span}: cannot differentiate {what}")]
    Unsupported { span: Span, what: String },
    #[error("generated name `{name}` collides with an existing name")]
    NameCollision { name: String },
    #[error("expected {expected} argument(s), got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("generated code failed to re-parse: {0}")]
    Reparse(#[from] ParseError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{span}: domain error: {message}")]
    Domain { span: Span, message: String },
    #[error("no function named `{0}`")]
    UnknownFunction(String),
    #[error("`{function}` expects {expected} argument(s), got {found}")]
    Arity { function: String, expected: usize, found: usize },
    #[error("{context}: type mismatch: {message}")]
    Type { context: String, message: String },
    #[error("{span}: index {index} out of bounds for `{array}` of length {len}")]
    Bounds { span: Span, array: String, index: i64, len: usize },
    #[error("{span}: integer arithmetic overflow")]
    Overflow { span: Span },
    #[error("{span}: pop from empty {stack} stack")]
    TapeUnderflow { span: Span, stack: &'static str },
    #[error("`{function}` returned with {values} value and {control} control entries left on its tape")]
    TapeImbalance { function: String, values: usize, control: usize },
    #[error("{span}: function `{function}` ended without returning a value")]
    MissingReturn { span: Span, function: String },
    #[error("call depth limit exceeded in `{0}`")]
    RecursionLimit(String),
    #[error("{span}: {message}")]
    Invalid { span: Span, message: String },
}

/// Crate-wide error for the pipeline entry points and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("evaluating at {coordinate} {sign} {h:e}: {source}")]
    Perturbed { coordinate: String, sign: char, h: f64, source: EvalError },
    #[error(transparent)]
    Launch(#[from] crate::parallel::LaunchError),
    #[error(transparent)]
    Fit(#[from] crate::fitbench::FitError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
