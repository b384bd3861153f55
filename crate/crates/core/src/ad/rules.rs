//! Tangent rules for every elementary operation of the language.
//!
//! Both modes share this table: forward mode seeds leaves with their tangent
//! variables, reverse mode seeds one leaf with the constant 1 to obtain a
//! single partial derivative.

use super::build::*;
use crate::dsl::ast::*;
use crate::error::DiffError;

pub(crate) struct Rules<'a> {
    /// Tangent of a `Var` or `Index` leaf; `None` when it is inactive.
    pub leaf: &'a dyn Fn(&Expr) -> Option<Expr>,
    /// When differentiating the right-hand side of `v = rhs`, copies of the
    /// whole `rhs` inside a rule (e.g. `exp(u)` in its own derivative) are
    /// replaced by `v`, which holds exactly that value.
    pub reuse: Option<(&'a Expr, &'a str)>,
}

impl Rules<'_> {
    fn copy(&self, e: &Expr) -> Expr {
        match self.reuse {
            Some((rhs, v)) if rhs == e => Expr::var(v),
            _ => e.clone(),
        }
    }

    pub fn tangent(&self, e: &Expr) -> Result<Option<Expr>, DiffError> {
        Ok(match &e.kind {
            ExprKind::Const(_) => None,
            ExprKind::Var(_) | ExprKind::Index(..) => (self.leaf)(e).and_then(nz),
            ExprKind::Neg(a) => self.tangent(a)?.map(neg),
            ExprKind::Binary(op, a, b) => {
                let (da, db) = (self.tangent(a)?, self.tangent(b)?);
                match op {
                    BinOp::Add => t_add(da, db),
                    BinOp::Sub => t_sub(da, db),
                    BinOp::Mul => t_add(da.map(|d| mul(d, self.copy(b))), db.map(|d| mul(self.copy(a), d))),
                    BinOp::Div => match (da, db) {
                        (None, None) => None,
                        (Some(da), None) => Some(div(da, self.copy(b))),
                        (da, Some(db)) => {
                            let num = t_sub(da.map(|d| mul(d, self.copy(b))), Some(mul(self.copy(a), db)));
                            num.map(|n| div(n, mul(self.copy(b), self.copy(b))))
                        }
                    },
                }
            }
            ExprKind::Call(f, args) => self.call(e, *f, args)?,
            ExprKind::Compare(..) => {
                return Err(DiffError::Unsupported { span: e.span, what: "a comparison used as a value".into() })
            }
            ExprKind::Pop(_) => {
                return Err(DiffError::Unsupported { span: e.span, what: "a tape pop nested inside an expression".into() })
            }
        })
    }

    fn call(&self, whole: &Expr, f: Intrinsic, args: &[Expr]) -> Result<Option<Expr>, DiffError> {
        let u = &args[0];
        let du = self.tangent(u)?;
        let u_ = || self.copy(u);
        Ok(match f {
            Intrinsic::Sin => du.map(|d| mul(call(Intrinsic::Cos, u_()), d)),
            Intrinsic::Cos => du.map(|d| mul(neg(call(Intrinsic::Sin, u_())), d)),
            Intrinsic::Tan => du.map(|d| {
                let cos = call(Intrinsic::Cos, u_());
                div(d, mul(cos.clone(), cos))
            }),
            Intrinsic::Exp => du.map(|d| mul(self.copy(whole), d)),
            Intrinsic::Log => du.map(|d| div(d, u_())),
            Intrinsic::Sqrt => du.map(|d| div(d, mul(c(2.0), self.copy(whole)))),
            Intrinsic::Fabs => du.map(|d| mul(call(Intrinsic::Sign, u_()), d)),
            Intrinsic::Sign => None,
            Intrinsic::Pow => {
                let v = &args[1];
                match self.tangent(v)? {
                    // c * pow(u, c - 1) * du
                    None => du.map(|d| {
                        let c1 = sub(self.copy(v), c(1.0));
                        mul(mul(self.copy(v), pow(u_(), c1)), d)
                    }),
                    // pow(u, v) * (dv * log(u) + v * du / u)
                    Some(dv) => {
                        let log_part = Some(mul(dv, call(Intrinsic::Log, u_())));
                        let base_part = du.map(|d| div(mul(self.copy(v), d), u_()));
                        t_add(log_part, base_part).map(|inner| mul(self.copy(whole), inner))
                    }
                }
            }
        })
    }
}

/// Leaves of `e` that carry a derivative, deduplicated structurally, in
/// first-occurrence order. Index sub-expressions are integer-valued and are
/// not descended into.
pub(crate) fn real_leaves<'e>(e: &'e Expr, keep: &dyn Fn(&Expr) -> bool, out: &mut Vec<&'e Expr>) {
    match &e.kind {
        ExprKind::Var(_) | ExprKind::Index(..) => {
            if keep(e) && !out.contains(&e) {
                out.push(e);
            }
        }
        ExprKind::Const(_) | ExprKind::Pop(_) => {}
        ExprKind::Neg(a) => real_leaves(a, keep, out),
        ExprKind::Binary(_, a, b) | ExprKind::Compare(_, a, b) => {
            real_leaves(a, keep, out);
            real_leaves(b, keep, out);
        }
        ExprKind::Call(_, args) => args.iter().for_each(|a| real_leaves(a, keep, out)),
    }
}

/// `∂e/∂leaf`, with every other leaf held constant.
pub(crate) fn partial(e: &Expr, leaf: &Expr, reuse: Option<(&Expr, &str)>) -> Result<Option<Expr>, DiffError> {
    let seed = |l: &Expr| if l == leaf { Some(c(1.0)) } else { None };
    Rules { leaf: &seed, reuse }.tangent(e)
}
