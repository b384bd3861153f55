use super::compile::{CArg, CExpr, CFunction, CStmt, ThreadVar};
use super::{Memory, OpCount, Program, ThreadCtx, Val, View};
use crate::dsl::ast::*;
use crate::error::EvalError;

const MAX_DEPTH: usize = 256;

/// Per-call LIFO stacks backing `__push`/`__pop`.
#[derive(Debug, Default)]
pub(crate) struct Tape {
    values: Vec<f64>,
    control: Vec<i64>,
}

enum Flow {
    Next,
    Return(Val),
}

pub(crate) struct Machine<'p, 'm> {
    pub program: &'p Program,
    pub mem: &'m mut Memory,
    pub ops: &'m mut OpCount,
    pub thread: Option<ThreadCtx>,
}

struct Frame<'f> {
    func: &'f CFunction,
    slots: Vec<Val>,
    tape: Tape,
    depth: usize,
}

impl Machine<'_, '_> {
    pub fn call(&mut self, fid: usize, args: Vec<Val>, depth: usize) -> Result<Option<Val>, EvalError> {
        let func = &self.program.functions[fid];
        if depth > MAX_DEPTH {
            return Err(EvalError::RecursionLimit(func.name.clone()));
        }
        let mut slots = args;
        slots.resize(func.slot_types.len(), Val::Real(0.0));
        for (i, ty) in func.slot_types.iter().enumerate().skip(func.params.len()) {
            if *ty == Type::Int {
                slots[i] = Val::Int(0);
            }
        }
        let mut frame = Frame { func, slots, tape: Tape::default(), depth };
        let flow = self.block(&mut frame, &func.body)?;
        if !frame.tape.values.is_empty() || !frame.tape.control.is_empty() {
            return Err(EvalError::TapeImbalance {
                function: func.name.clone(),
                values: frame.tape.values.len(),
                control: frame.tape.control.len(),
            });
        }
        match flow {
            Flow::Return(v) => Ok(Some(v)),
            Flow::Next if func.returns_value => Err(EvalError::MissingReturn { span: func.span, function: func.name.clone() }),
            Flow::Next => Ok(None),
        }
    }

    fn block(&mut self, fr: &mut Frame, body: &[CStmt]) -> Result<Flow, EvalError> {
        for s in body {
            if let Flow::Return(v) = self.stmt(fr, s)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Next)
    }

    fn stmt(&mut self, fr: &mut Frame, s: &CStmt) -> Result<Flow, EvalError> {
        self.ops.statements += 1;
        match s {
            CStmt::Set { slot, op, value } => {
                let v = self.expr(fr, value)?;
                let slot = *slot as usize;
                let ty = fr.func.slot_types[slot];
                let new = match op {
                    AssignOp::Set => v,
                    AssignOp::Add => {
                        self.ops.adds += 1;
                        arith(BinOp::Add, fr.slots[slot], v, Span::default())?
                    }
                };
                fr.slots[slot] = coerce(new, ty, &fr.func.slot_names[slot])?;
            }
            CStmt::SetElem { slot, index, op, value, span } => {
                let v = real(self.expr(fr, value)?);
                let view = fr.slots[*slot as usize].view();
                let i = self.index(fr, index, view, *slot, *span)?;
                let cell = view.buf as usize;
                let at = view.off as usize + i;
                let new = match op {
                    AssignOp::Set => v,
                    AssignOp::Add => {
                        self.ops.adds += 1;
                        self.mem.buffers[cell][at] + v
                    }
                };
                self.mem.write(cell, at, new);
                self.ops.effects += 1;
            }
            CStmt::Return(e) => {
                let v = self.expr(fr, e)?;
                return Ok(Flow::Return(Val::Real(real(v))));
            }
            CStmt::If { cond, then_body, else_body } => {
                let taken = match self.expr(fr, cond)? {
                    Val::Bool(b) => b,
                    _ => return Err(type_err(fr, "condition is not a comparison")),
                };
                return self.block(fr, if taken { then_body } else { else_body });
            }
            CStmt::For { slot, start, end, dir, body, span } => {
                let a = int(self.expr(fr, start)?, *span)?;
                let b = int(self.expr(fr, end)?, *span)?;
                let slot = *slot as usize;
                match dir {
                    LoopDir::Up => {
                        let mut i = a;
                        while i < b {
                            fr.slots[slot] = Val::Int(i);
                            if let Flow::Return(v) = self.block(fr, body)? {
                                return Ok(Flow::Return(v));
                            }
                            i += 1;
                        }
                    }
                    LoopDir::Down => {
                        let mut i = a;
                        while i >= b {
                            fr.slots[slot] = Val::Int(i);
                            if let Flow::Return(v) = self.block(fr, body)? {
                                return Ok(Flow::Return(v));
                            }
                            i -= 1;
                        }
                    }
                }
            }
            CStmt::Call { callee, args, .. } => {
                let target = &self.program.functions[*callee];
                let mut vals = Vec::with_capacity(args.len());
                for (a, p) in args.iter().zip(&target.params) {
                    let v = match a {
                        CArg::Value(e) => coerce(self.expr(fr, e)?, p.ty, &p.name)?,
                        CArg::Whole(slot) => fr.slots[*slot as usize],
                        CArg::Element(slot, idx, sp) => {
                            let view = fr.slots[*slot as usize].view();
                            let i = self.index(fr, idx, view, *slot, *sp)?;
                            if p.ty == Type::RealArray {
                                Val::Arr(View { buf: view.buf, off: view.off + i as u32, len: 1 })
                            } else {
                                coerce(Val::Real(self.mem.buffers[view.buf as usize][view.off as usize + i]), p.ty, &p.name)?
                            }
                        }
                    };
                    vals.push(v);
                }
                self.ops.effects += 1;
                let saved = self.thread.take();
                let r = self.call(*callee, vals, fr.depth + 1);
                self.thread = saved;
                r?;
            }
            CStmt::Push(stack, e) => {
                let v = self.expr(fr, e)?;
                self.ops.pushes += 1;
                match stack {
                    TapeStack::Value => fr.tape.values.push(real(v)),
                    TapeStack::Control => fr.tape.control.push(int(v, Span::default())?),
                }
            }
        }
        Ok(Flow::Next)
    }

    fn index(&mut self, fr: &mut Frame, e: &CExpr, view: View, slot: u32, span: Span) -> Result<usize, EvalError> {
        let i = int(self.expr(fr, e)?, span)?;
        if i < 0 || i as usize >= view.len as usize {
            return Err(EvalError::Bounds { span, array: fr.func.slot_names[slot as usize].clone(), index: i, len: view.len as usize });
        }
        Ok(i as usize)
    }

    fn expr(&mut self, fr: &mut Frame, e: &CExpr) -> Result<Val, EvalError> {
        Ok(match e {
            CExpr::Const(c) => Val::Real(*c),
            CExpr::Slot(s) => fr.slots[*s as usize],
            CExpr::Thread(t) => {
                let ctx = self.thread.ok_or_else(|| EvalError::Invalid {
                    span: fr.func.span,
                    message: "thread index used outside a kernel launch".into(),
                })?;
                Val::Int(match t {
                    ThreadVar::BlockIdx => ctx.block_idx,
                    ThreadVar::BlockDim => ctx.block_dim,
                    ThreadVar::ThreadIdx => ctx.thread_idx,
                    ThreadVar::GridDim => ctx.grid_dim,
                } as i64)
            }
            CExpr::Neg(a) => {
                self.ops.adds += 1;
                match self.expr(fr, a)? {
                    Val::Int(i) => Val::Int(i.checked_neg().ok_or(EvalError::Overflow { span: Span::default() })?),
                    v => Val::Real(-real(v)),
                }
            }
            CExpr::Bin(op, a, b, span) => {
                let (x, y) = (self.expr(fr, a)?, self.expr(fr, b)?);
                match op {
                    BinOp::Add | BinOp::Sub => self.ops.adds += 1,
                    BinOp::Mul => self.ops.muls += 1,
                    BinOp::Div => self.ops.divs += 1,
                }
                arith(*op, x, y, *span)?
            }
            CExpr::Cmp(op, a, b) => {
                let (x, y) = (self.expr(fr, a)?, self.expr(fr, b)?);
                self.ops.comparisons += 1;
                let r = match (x, y) {
                    (Val::Int(i), Val::Int(j)) => cmp_int(*op, i, j),
                    _ => op.apply(real(x), real(y)),
                };
                Val::Bool(r)
            }
            CExpr::Call(f, a, span) => {
                let u = real(self.expr(fr, a)?);
                self.ops.intrinsics += 1;
                Val::Real(intrinsic(*f, u, *span)?)
            }
            CExpr::Pow(a, b, span) => {
                let (u, v) = (real(self.expr(fr, a)?), real(self.expr(fr, b)?));
                self.ops.intrinsics += 1;
                if u < 0.0 && v.fract() != 0.0 {
                    return Err(domain(*span, format!("pow({u}, {v}) of a negative base")));
                }
                if u == 0.0 && v < 0.0 {
                    return Err(domain(*span, format!("pow(0, {v})")));
                }
                Val::Real(u.powf(v))
            }
            CExpr::Index(slot, i, span) => {
                let view = fr.slots[*slot as usize].view();
                let i = self.index(fr, i, view, *slot, *span)?;
                Val::Real(self.mem.buffers[view.buf as usize][view.off as usize + i])
            }
            CExpr::Pop(stack, span) => {
                self.ops.pops += 1;
                match stack {
                    TapeStack::Value => Val::Real(
                        fr.tape.values.pop().ok_or(EvalError::TapeUnderflow { span: *span, stack: "value" })?,
                    ),
                    TapeStack::Control => Val::Int(
                        fr.tape.control.pop().ok_or(EvalError::TapeUnderflow { span: *span, stack: "control" })?,
                    ),
                }
            }
        })
    }
}

fn cmp_int(op: CmpOp, a: i64, b: i64) -> bool {
    match op {
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
        CmpOp::Gt => a > b,
        CmpOp::Ge => a >= b,
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
    }
}

fn domain(span: Span, message: String) -> EvalError {
    EvalError::Domain { span, message }
}

fn type_err(fr: &Frame, message: &str) -> EvalError {
    EvalError::Type { context: fr.func.name.clone(), message: message.into() }
}

fn intrinsic(f: Intrinsic, u: f64, span: Span) -> Result<f64, EvalError> {
    Ok(match f {
        Intrinsic::Sin => u.sin(),
        Intrinsic::Cos => u.cos(),
        Intrinsic::Tan => u.tan(),
        Intrinsic::Exp => u.exp(),
        Intrinsic::Log => {
            if u <= 0.0 {
                return Err(domain(span, format!("log({u})")));
            }
            u.ln()
        }
        Intrinsic::Sqrt => {
            if u < 0.0 {
                return Err(domain(span, format!("sqrt({u})")));
            }
            u.sqrt()
        }
        Intrinsic::Fabs => u.abs(),
        Intrinsic::Sign => {
            if u > 0.0 {
                1.0
            } else if u < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        Intrinsic::Pow => unreachable!("pow is lowered separately"),
    })
}

pub(crate) fn real(v: Val) -> f64 {
    match v {
        Val::Real(r) => r,
        Val::Int(i) => i as f64,
        Val::Bool(b) => b as i64 as f64,
        Val::Arr(_) => f64::NAN,
    }
}

const EXACT_INT: f64 = 9_007_199_254_740_992.0;

pub(crate) fn int(v: Val, span: Span) -> Result<i64, EvalError> {
    match v {
        Val::Int(i) => Ok(i),
        Val::Real(r) if r.fract() == 0.0 && r.abs() <= EXACT_INT => Ok(r as i64),
        Val::Real(r) => Err(EvalError::Invalid { span, message: format!("{r} is not an exact integer") }),
        _ => Err(EvalError::Invalid { span, message: "expected an integer".into() }),
    }
}

fn arith(op: BinOp, x: Val, y: Val, span: Span) -> Result<Val, EvalError> {
    if let (Val::Int(a), Val::Int(b)) = (x, y) {
        let r = match op {
            BinOp::Add => a.checked_add(b),
            BinOp::Sub => a.checked_sub(b),
            BinOp::Mul => a.checked_mul(b),
            BinOp::Div => {
                if b == 0 {
                    return Err(domain(span, "division by zero".into()));
                }
                return Ok(Val::Real(a as f64 / b as f64));
            }
        };
        return r.map(Val::Int).ok_or(EvalError::Overflow { span });
    }
    let (a, b) = (real(x), real(y));
    Ok(Val::Real(match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Err(domain(span, "division by zero".into()));
            }
            a / b
        }
    }))
}

pub(crate) fn coerce(v: Val, ty: Type, name: &str) -> Result<Val, EvalError> {
    match (ty, v) {
        (Type::Real, Val::Real(_)) => Ok(v),
        (Type::Real, Val::Int(i)) => Ok(Val::Real(i as f64)),
        (Type::Int, Val::Int(_)) => Ok(v),
        (Type::Int, Val::Real(_)) => int(v, Span::default()).map(Val::Int).map_err(|_| EvalError::Type {
            context: name.to_string(),
            message: format!("{} is not an exact integer", real(v)),
        }),
        (Type::RealArray, Val::Arr(_)) => Ok(v),
        _ => Err(EvalError::Type { context: name.to_string(), message: format!("cannot use {v:?} as {}", ty.keyword()) }),
    }
}
