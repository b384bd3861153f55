//! The differentiable DSL: syntax tree, parser and printer.
//!
//! ```text
//! module   := function*
//! function := qualifier* ("real" | "void") IDENT "(" params ")" block
//! qualifier:= "device" | "host" | "global"
//! param    := ("real" | "real[]" | "int") IDENT
//! stmt     := ("real" | "int") IDENT "=" expr ";"
//!           | IDENT ("[" expr "]")? ("=" | "+=") expr ";"
//!           | "return" expr ";"
//!           | "if" "(" expr ")" block ("else" (block | if))?
//!           | "for" "(" "int" IDENT "=" expr ";" IDENT ("<" | ">=") expr ";" IDENT ("++" | "--") ")" block
//!           | IDENT "(" args ")" ";"
//!           | ("__push" | "__pushc") "(" expr ")" ";"
//! ```
//!
//! Expressions use the usual C precedence; comparisons are non-associative
//! and only valid as `if` conditions. `PI` is a built-in constant.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod printer;

pub use ast::*;
pub use parser::{parse, parse_expr};
pub use printer::{print, print_expr, print_function};
