//! Folding constructors for generated expressions.
//!
//! Every fold here is exact in IEEE arithmetic (sign flips, multiplication
//! by one, constant arithmetic), so generated code computes bit-identical
//! values to the unfolded form while executing fewer operations. Derivative
//! values are `Option<Expr>` with `None` standing for an exact zero.

use crate::dsl::ast::*;

pub(crate) fn c(v: f64) -> Expr {
    Expr::constant(v)
}

fn is(e: &Expr, v: f64) -> bool {
    e.as_const() == Some(v)
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    Expr::synth(ExprKind::Binary(op, Box::new(a), Box::new(b)))
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a.kind {
        ExprKind::Const(v) => c(-v),
        ExprKind::Neg(inner) => *inner,
        kind => Expr::synth(ExprKind::Neg(Box::new(Expr::synth(kind)))),
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (&a.kind, &b.kind) {
        (ExprKind::Const(x), ExprKind::Const(y)) => c(x + y),
        _ if is(&a, 0.0) => b,
        _ if is(&b, 0.0) => a,
        (_, ExprKind::Neg(_)) => sub(a, neg(b)),
        (ExprKind::Neg(_), _) => sub(b, neg(a)),
        _ => bin(BinOp::Add, a, b),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (&a.kind, &b.kind) {
        (ExprKind::Const(x), ExprKind::Const(y)) => c(x - y),
        _ if is(&b, 0.0) => a,
        _ if is(&a, 0.0) => neg(b),
        (_, ExprKind::Neg(_)) => add(a, neg(b)),
        _ => bin(BinOp::Sub, a, b),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (&a.kind, &b.kind) {
        (ExprKind::Const(x), ExprKind::Const(y)) => c(x * y),
        _ if is(&a, 1.0) => b,
        _ if is(&b, 1.0) => a,
        _ if is(&a, -1.0) => neg(b),
        _ if is(&b, -1.0) => neg(a),
        _ if is(&a, 0.0) || is(&b, 0.0) => c(0.0),
        (ExprKind::Neg(_), _) => neg(mul(neg(a), b)),
        (_, ExprKind::Neg(_)) => neg(mul(a, neg(b))),
        _ => bin(BinOp::Mul, a, b),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (&a.kind, &b.kind) {
        (ExprKind::Const(x), ExprKind::Const(y)) if *y != 0.0 => c(x / y),
        _ if is(&b, 1.0) => a,
        _ if is(&b, -1.0) => neg(a),
        (ExprKind::Neg(_), _) => neg(div(neg(a), b)),
        _ => bin(BinOp::Div, a, b),
    }
}

pub(crate) fn call(f: Intrinsic, u: Expr) -> Expr {
    Expr::synth(ExprKind::Call(f, vec![u]))
}

pub(crate) fn pow(u: Expr, v: Expr) -> Expr {
    if is(&v, 1.0) {
        return u;
    }
    if is(&v, 0.0) {
        return c(1.0);
    }
    Expr::synth(ExprKind::Call(Intrinsic::Pow, vec![u, v]))
}

/// Drop explicit zeros so callers only ever see `None` for zero.
pub(crate) fn nz(e: Expr) -> Option<Expr> {
    if is(&e, 0.0) {
        None
    } else {
        Some(e)
    }
}

pub(crate) fn t_add(a: Option<Expr>, b: Option<Expr>) -> Option<Expr> {
    match (a, b) {
        (None, b) => b,
        (a, None) => a,
        (Some(a), Some(b)) => nz(add(a, b)),
    }
}

pub(crate) fn t_sub(a: Option<Expr>, b: Option<Expr>) -> Option<Expr> {
    match (a, b) {
        (a, None) => a,
        (None, Some(b)) => Some(neg(b)),
        (Some(a), Some(b)) => nz(sub(a, b)),
    }
}

pub(crate) fn or_zero(e: Option<Expr>) -> Expr {
    e.unwrap_or_else(|| c(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::print_expr;

    fn v(n: &str) -> Expr {
        Expr::var(n)
    }

    #[test]
    fn folds_identities() {
        assert_eq!(mul(c(1.0), v("x")), v("x"));
        assert_eq!(mul(v("x"), c(-1.0)), neg(v("x")));
        assert_eq!(neg(neg(v("x"))), v("x"));
        assert_eq!(mul(c(2.0), c(3.0)), c(6.0));
        assert_eq!(sub(c(2.0), c(1.0)), c(1.0));
        assert_eq!(div(v("x"), c(1.0)), v("x"));
        assert_eq!(pow(v("x"), c(1.0)), v("x"));
    }

    #[test]
    fn moves_negation_outward() {
        assert_eq!(print_expr(&add(v("a"), neg(v("b")))), "a - b");
        assert_eq!(print_expr(&sub(v("a"), neg(v("b")))), "a + b");
        assert_eq!(print_expr(&add(neg(v("a")), v("b"))), "b - a");
        assert_eq!(print_expr(&mul(neg(v("a")), v("b"))), "-(a * b)");
        assert_eq!(mul(neg(v("a")), neg(v("b"))), mul(v("a"), v("b")));
    }

    #[test]
    fn zero_tangents_vanish() {
        assert_eq!(t_add(None, None), None);
        assert_eq!(t_sub(None, Some(v("x"))), Some(neg(v("x"))));
        assert_eq!(t_add(Some(c(1.0)), Some(c(-1.0))), None);
    }
}
