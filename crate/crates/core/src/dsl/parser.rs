//! Recursive-descent parser for `.dsl` sources.

use crate::dsl::ast::*;
use crate::dsl::lexer::{tokenize, Tok, Token};
use crate::error::ParseError;

const KEYWORDS: [&str; 10] = ["real", "void", "int", "device", "host", "global", "return", "if", "else", "for"];

pub fn parse(source: &str) -> Result<Module, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut functions = Vec::new();
    while !p.at_eof() {
        functions.push(p.function()?);
    }
    Ok(Module { functions })
}

/// Parse a single expression (used by tests and the CLI).
pub fn parse_expr(source: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    if !p.at_eof() {
        return Err(p.unexpected("end of expression"));
    }
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        ParseError::Syntax { span: self.span(), expected: expected.to_string(), found: self.peek().describe() }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<Span, ParseError> {
        if self.is_punct(p) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("`{p}`")))
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<Span, ParseError> {
        if self.is_word(w) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("`{w}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), ParseError> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let t = self.bump();
                match t.tok {
                    Tok::Ident(s) => Ok((s, t.span)),
                    _ => unreachable!(),
                }
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn function(&mut self) -> Result<FunctionDef, ParseError> {
        let span = self.span();
        let mut qualifiers = Qualifiers::new();
        loop {
            let q = match self.peek() {
                Tok::Ident(s) if s == "device" => Qualifier::Device,
                Tok::Ident(s) if s == "host" => Qualifier::Host,
                Tok::Ident(s) if s == "global" => Qualifier::Global,
                _ => break,
            };
            self.bump();
            qualifiers.insert(q);
        }
        let ret = if self.is_word("real") {
            self.bump();
            ReturnType::Real
        } else if self.is_word("void") {
            self.bump();
            ReturnType::Void
        } else {
            return Err(self.unexpected("qualifier, `real` or `void`"));
        };
        let (name, _) = self.ident("function name")?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                let pspan = self.span();
                let ty = self.param_type()?;
                let (pname, _) = self.ident("parameter name")?;
                params.push(Param { name: pname, ty, span: pspan });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        let body = self.block()?;
        Ok(FunctionDef { name, qualifiers, ret, params, body, span })
    }

    fn param_type(&mut self) -> Result<Type, ParseError> {
        if self.is_word("real") {
            self.bump();
            if self.eat_punct("[") {
                self.expect_punct("]")?;
                Ok(Type::RealArray)
            } else {
                Ok(Type::Real)
            }
        } else if self.is_word("int") {
            self.bump();
            Ok(Type::Int)
        } else {
            Err(self.unexpected("parameter type or `)`"))
        }
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect_punct("{")?;
        let mut body = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return Err(self.unexpected("`}`"));
            }
            body.push(self.stmt()?);
        }
        self.bump();
        Ok(body)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Ident(w) if w == "real" || w == "int" => {
                self.bump();
                let ty = if w == "real" { Type::Real } else { Type::Int };
                if self.is_punct("[") {
                    return Err(self.unexpected("local name (array locals are not supported)"));
                }
                let (name, _) = self.ident("variable name")?;
                self.expect_punct("=")?;
                let init = self.expr()?;
                self.expect_punct(";")?;
                StmtKind::Decl { name, ty, init }
            }
            Tok::Ident(w) if w == "return" => {
                self.bump();
                let value = self.expr()?;
                self.expect_punct(";")?;
                StmtKind::Return(value)
            }
            Tok::Ident(w) if w == "if" => return self.if_stmt(),
            Tok::Ident(w) if w == "for" => return self.for_stmt(),
            Tok::Ident(w) if w == "__push" || w == "__pushc" => {
                self.bump();
                let stack = if w == "__push" { TapeStack::Value } else { TapeStack::Control };
                self.expect_punct("(")?;
                let value = self.expr()?;
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                StmtKind::Push(stack, value)
            }
            Tok::Ident(_) => {
                let (name, _) = self.ident("statement")?;
                if self.eat_punct("(") {
                    let args = self.args()?;
                    self.expect_punct(";")?;
                    StmtKind::Call { name, args }
                } else {
                    let index = if self.eat_punct("[") {
                        let idx = self.expr()?;
                        self.expect_punct("]")?;
                        Some(idx)
                    } else {
                        None
                    };
                    let op = if self.eat_punct("=") {
                        AssignOp::Set
                    } else if self.eat_punct("+=") {
                        AssignOp::Add
                    } else {
                        return Err(self.unexpected("`=` or `+=`"));
                    };
                    let value = self.expr()?;
                    self.expect_punct(";")?;
                    StmtKind::Assign { target: LValue { name, index }, op, value }
                }
            }
            _ => return Err(self.unexpected("statement")),
        };
        Ok(Stmt::new(kind, span))
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        let span = self.expect_word("if")?;
        self.expect_punct("(")?;
        let cond = self.expr()?;
        self.expect_punct(")")?;
        let then_body = self.block()?;
        let else_body = if self.is_word("else") {
            self.bump();
            if self.is_word("if") {
                vec![self.if_stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt::new(StmtKind::If { cond, then_body, else_body }, span))
    }

    fn for_stmt(&mut self) -> Result<Stmt, ParseError> {
        let span = self.expect_word("for")?;
        self.expect_punct("(")?;
        self.expect_word("int")?;
        let (var, _) = self.ident("loop variable")?;
        self.expect_punct("=")?;
        let start = self.expr()?;
        self.expect_punct(";")?;
        let (cvar, _) = self.ident("loop variable")?;
        if cvar != var {
            return Err(ParseError::Syntax {
                span: self.tokens[self.pos - 1].span,
                expected: format!("loop variable `{var}`"),
                found: format!("`{cvar}`"),
            });
        }
        let dir = if self.eat_punct("<") {
            LoopDir::Up
        } else if self.eat_punct(">=") {
            LoopDir::Down
        } else {
            return Err(self.unexpected("`<` or `>=`"));
        };
        let end = self.additive()?;
        self.expect_punct(";")?;
        let (svar, _) = self.ident("loop variable")?;
        if svar != var {
            return Err(ParseError::Syntax {
                span: self.tokens[self.pos - 1].span,
                expected: format!("loop variable `{var}`"),
                found: format!("`{svar}`"),
            });
        }
        match dir {
            LoopDir::Up => self.expect_punct("++")?,
            LoopDir::Down => self.expect_punct("--")?,
        };
        self.expect_punct(")")?;
        let body = self.block()?;
        Ok(Stmt::new(StmtKind::For { var, start, end, dir, body }, span))
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        if !self.is_punct(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(args)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Punct("<") => CmpOp::Lt,
            Tok::Punct("<=") => CmpOp::Le,
            Tok::Punct(">") => CmpOp::Gt,
            Tok::Punct(">=") => CmpOp::Ge,
            Tok::Punct("==") => CmpOp::Eq,
            Tok::Punct("!=") => CmpOp::Ne,
            _ => return Ok(lhs),
        };
        let span = self.bump().span;
        let rhs = self.additive()?;
        Ok(Expr::new(ExprKind::Compare(op, Box::new(lhs), Box::new(rhs)), span))
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("+") => BinOp::Add,
                Tok::Punct("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.term()?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("*") => BinOp::Mul,
                Tok::Punct("/") => BinOp::Div,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.unary()?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.is_punct("-") {
            let span = self.bump().span;
            // A minus directly in front of a literal is part of the literal.
            if let Tok::Num(v) = *self.peek() {
                self.bump();
                return Ok(Expr::new(ExprKind::Const(-v), span));
            }
            let operand = self.unary()?;
            return Ok(Expr::new(ExprKind::Neg(Box::new(operand)), span));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::new(ExprKind::Const(v), span))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(name) if name == "__pop" || name == "__popc" => {
                self.bump();
                self.expect_punct("(")?;
                self.expect_punct(")")?;
                let stack = if name == "__pop" { TapeStack::Value } else { TapeStack::Control };
                Ok(Expr::new(ExprKind::Pop(stack), span))
            }
            Tok::Ident(_) => {
                let (name, _) = self.ident("expression")?;
                if self.is_punct("(") {
                    self.bump();
                    let args = self.args()?;
                    let f = Intrinsic::from_name(&name)
                        .ok_or_else(|| ParseError::UnknownFunction { span, name: name.clone() })?;
                    if args.len() != f.arity() {
                        return Err(ParseError::Arity { span, name, expected: f.arity(), found: args.len() });
                    }
                    Ok(Expr::new(ExprKind::Call(f, args), span))
                } else if self.eat_punct("[") {
                    let idx = self.expr()?;
                    self.expect_punct("]")?;
                    Ok(Expr::new(ExprKind::Index(name, Box::new(idx)), span))
                } else {
                    Ok(Expr::new(ExprKind::Var(name), span))
                }
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAUSS: &str = "device host real gauss(real x, real p, real sigma) { real t = -(x-p)*(x-p)/(2*sigma*sigma); return pow(2*PI, -0.5) * pow(sigma, -0.5) * exp(t); }";

    #[test]
    fn parses_gauss() {
        let m = parse(GAUSS).unwrap();
        let f = &m.functions[0];
        assert_eq!(f.name, "gauss");
        assert_eq!(f.qualifiers, [Qualifier::Device, Qualifier::Host].into_iter().collect());
        assert_eq!(f.params.len(), 3);
        assert_eq!(f.body.len(), 2);
        assert!(matches!(f.body[0].kind, StmtKind::Decl { ref name, .. } if name == "t"));
        assert!(matches!(f.body[1].kind, StmtKind::Return(_)));
    }

    #[test]
    fn parses_minimal_function() {
        let m = parse("real f() { return 0; }").unwrap();
        assert!(m.functions[0].params.is_empty());
        assert_eq!(m.functions[0].body.len(), 1);
    }

    #[test]
    fn malformed_params_report_position() {
        let err = parse("real f( { }").unwrap_err();
        match err {
            ParseError::Syntax { span, found, .. } => {
                assert_eq!((span.line, span.col), (1, 9));
                assert_eq!(found, "`{`");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn intrinsic_arity_is_checked() {
        let err = parse("real f(real x) { return pow(x); }").unwrap_err();
        assert!(matches!(err, ParseError::Arity { expected: 2, found: 1, .. }));
        let err = parse("real f(real x) { return g(x); }").unwrap_err();
        assert!(matches!(err, ParseError::UnknownFunction { .. }));
    }

    #[test]
    fn negative_literal_folds_but_negated_group_does_not() {
        let e = parse_expr("-2 * x").unwrap();
        match e.kind {
            ExprKind::Binary(BinOp::Mul, a, _) => assert_eq!(a.as_const(), Some(-2.0)),
            other => panic!("{other:?}"),
        }
        let e = parse_expr("-(2) * x").unwrap();
        assert!(matches!(e.kind, ExprKind::Binary(BinOp::Mul, ref a, _) if matches!(a.kind, ExprKind::Neg(_))));
    }

    #[test]
    fn parses_loops_and_tape_ops() {
        let src = "void g(real[] d, int n) { for (int i = n - 1; i >= 0; i--) { d[i] += __pop(); } __pushc(n); }";
        let m = parse(src).unwrap();
        let body = &m.functions[0].body;
        assert!(matches!(body[0].kind, StmtKind::For { dir: LoopDir::Down, .. }));
        assert!(matches!(body[1].kind, StmtKind::Push(TapeStack::Control, _)));
    }

    #[test]
    fn loop_header_must_use_one_variable() {
        assert!(parse("real f(int n) { for (int i = 0; j < n; i++) { } return 0; }").is_err());
    }
}
