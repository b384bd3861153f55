//! Pretty-printer. Output re-parses to a structurally identical tree.

use std::fmt::Write;

use crate::dsl::ast::*;

const INDENT: &str = "    ";

pub fn print(m: &Module) -> String {
    let mut out = String::new();
    for (i, f) in m.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&print_function(f));
    }
    out
}

pub fn print_function(f: &FunctionDef) -> String {
    let mut out = String::new();
    for q in &f.qualifiers {
        out.push_str(q.keyword());
        out.push(' ');
    }
    out.push_str(match f.ret {
        ReturnType::Real => "real ",
        ReturnType::Void => "void ",
    });
    out.push_str(&f.name);
    out.push('(');
    let params: Vec<String> = f.params.iter().map(|p| format!("{} {}", p.ty.keyword(), p.name)).collect();
    out.push_str(&params.join(", "));
    out.push_str(") {\n");
    print_block(&mut out, &f.body, 1);
    out.push_str("}\n");
    out
}

fn print_block(out: &mut String, body: &[Stmt], depth: usize) {
    for s in body {
        print_stmt(out, s, depth);
    }
}

fn print_stmt(out: &mut String, s: &Stmt, depth: usize) {
    let pad = INDENT.repeat(depth);
    match &s.kind {
        StmtKind::Decl { name, ty, init } => {
            let _ = writeln!(out, "{pad}{} {name} = {};", ty.keyword(), print_expr(init));
        }
        StmtKind::Assign { target, op, value } => {
            let _ = writeln!(out, "{pad}{} {} {};", print_lvalue(target), op.symbol(), print_expr(value));
        }
        StmtKind::Return(e) => {
            let _ = writeln!(out, "{pad}return {};", print_expr(e));
        }
        StmtKind::If { cond, then_body, else_body } => {
            let _ = writeln!(out, "{pad}if ({}) {{", print_expr(cond));
            print_block(out, then_body, depth + 1);
            if else_body.is_empty() {
                let _ = writeln!(out, "{pad}}}");
            } else {
                let _ = writeln!(out, "{pad}}} else {{");
                print_block(out, else_body, depth + 1);
                let _ = writeln!(out, "{pad}}}");
            }
        }
        StmtKind::For { var, start, end, dir, body } => {
            let (cmp, step) = match dir {
                LoopDir::Up => ("<", "++"),
                LoopDir::Down => (">=", "--"),
            };
            let _ = writeln!(
                out,
                "{pad}for (int {var} = {}; {var} {cmp} {}; {var}{step}) {{",
                print_expr(start),
                print_expr(end)
            );
            print_block(out, body, depth + 1);
            let _ = writeln!(out, "{pad}}}");
        }
        StmtKind::Call { name, args } => {
            let args: Vec<String> = args.iter().map(print_expr).collect();
            let _ = writeln!(out, "{pad}{name}({});", args.join(", "));
        }
        StmtKind::Push(stack, e) => {
            let _ = writeln!(out, "{pad}{}({});", stack.push_name(), print_expr(e));
        }
    }
}

pub fn print_lvalue(lv: &LValue) -> String {
    match &lv.index {
        Some(i) => format!("{}[{}]", lv.name, print_expr(i)),
        None => lv.name.clone(),
    }
}

const PREC_CMP: u8 = 0;
const PREC_UNARY: u8 = 3;
const PREC_ATOM: u8 = 4;

fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Compare(..) => PREC_CMP,
        ExprKind::Binary(op, ..) => op.precedence(),
        ExprKind::Neg(_) => PREC_UNARY,
        ExprKind::Const(c) if c.is_sign_negative() => PREC_UNARY,
        _ => PREC_ATOM,
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

fn format_number(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "1e999".into() } else { "-1e999".into() }
    } else {
        format!("{v}")
    }
}

fn write_wrapped(out: &mut String, e: &Expr, wrap: bool) {
    if wrap {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Const(c) => out.push_str(&format_number(*c)),
        ExprKind::Var(n) => out.push_str(n),
        ExprKind::Pop(stack) => {
            out.push_str(stack.pop_name());
            out.push_str("()");
        }
        ExprKind::Neg(a) => {
            out.push('-');
            // `-2` would re-parse as a literal and `--x` does not lex as two minuses.
            let wrap = precedence(a) < PREC_ATOM || matches!(a.kind, ExprKind::Const(_));
            write_wrapped(out, a, wrap);
        }
        ExprKind::Binary(op, a, b) => {
            let p = op.precedence();
            write_wrapped(out, a, precedence(a) < p);
            let _ = write!(out, " {} ", op.symbol());
            write_wrapped(out, b, precedence(b) <= p);
        }
        ExprKind::Compare(op, a, b) => {
            write_wrapped(out, a, precedence(a) == PREC_CMP);
            let _ = write!(out, " {} ", op.symbol());
            write_wrapped(out, b, precedence(b) == PREC_CMP);
        }
        ExprKind::Call(f, args) => {
            out.push_str(f.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a);
            }
            out.push(')');
        }
        ExprKind::Index(n, i) => {
            out.push_str(n);
            out.push('[');
            write_expr(out, i);
            out.push(']');
        }
    }
}
