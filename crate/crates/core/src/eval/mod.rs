//! Deterministic interpreter with exact elementary-operation counters.
//!
//! Every arithmetic node evaluated bumps exactly one counter: `+`, `-`,
//! unary minus and `+=` count as adds, `*` as muls, `/` as divs, and every
//! intrinsic call as one intrinsic regardless of its internal cost.
//! Comparisons and tape traffic are counted but kept out of
//! [`OpCount::total`].

mod compile;
mod machine;

use std::collections::HashMap;

use compile::{compile_function, CFunction};
use machine::Machine;

use crate::dsl::ast::{Module, Type};
use crate::error::{EvalError, Result};
use crate::semantic::check_module;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct OpCount {
    pub adds: u64,
    pub muls: u64,
    pub divs: u64,
    pub intrinsics: u64,
    pub comparisons: u64,
    pub pushes: u64,
    pub pops: u64,
    /// Statements executed.
    pub statements: u64,
    /// Array-element writes and user-function calls.
    pub effects: u64,
}

impl OpCount {
    /// Arithmetic plus intrinsic operations; tape traffic and comparisons excluded.
    pub fn total(&self) -> u64 {
        self.adds + self.muls + self.divs + self.intrinsics
    }

    pub fn tape_traffic(&self) -> u64 {
        self.pushes + self.pops
    }

    pub fn accumulate(&mut self, other: &OpCount) {
        self.adds += other.adds;
        self.muls += other.muls;
        self.divs += other.divs;
        self.intrinsics += other.intrinsics;
        self.comparisons += other.comparisons;
        self.pushes += other.pushes;
        self.pops += other.pops;
        self.statements += other.statements;
        self.effects += other.effects;
    }
}

impl std::fmt::Display for OpCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "total={} adds={} muls={} divs={} intrinsics={} comparisons={} pushes={} pops={}",
            self.total(),
            self.adds,
            self.muls,
            self.divs,
            self.intrinsics,
            self.comparisons,
            self.pushes,
            self.pops
        )
    }
}

/// Caller-side argument value.
#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Real(f64),
    Int(i64),
    Array(Vec<f64>),
}

impl Arg {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Arg::Real(r) => Some(*r),
            Arg::Int(i) => Some(*i as f64),
            Arg::Array(_) => None,
        }
    }

    /// Zero-filled argument of the same shape, e.g. an adjoint slot for `self`.
    pub fn zeros_like(&self) -> Arg {
        match self {
            Arg::Array(a) => Arg::Array(vec![0.0; a.len()]),
            _ => Arg::Array(vec![0.0]),
        }
    }
}

impl From<f64> for Arg {
    fn from(v: f64) -> Self {
        Arg::Real(v)
    }
}

/// Window into one buffer; array-typed values are passed by reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct View {
    pub buf: u32,
    pub off: u32,
    pub len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Val {
    Real(f64),
    Int(i64),
    Bool(bool),
    Arr(View),
}

impl Val {
    fn view(self) -> View {
        match self {
            Val::Arr(v) => v,
            _ => View { buf: 0, off: 0, len: 0 },
        }
    }
}

/// Array storage shared by every frame of one evaluation.
#[derive(Debug, Clone, Default)]
pub struct Memory {
    pub buffers: Vec<Vec<f64>>,
    /// Per-element write flags, when tracking is enabled.
    pub written: Option<Vec<Vec<bool>>>,
}

impl Memory {
    pub fn new() -> Self {
        Memory::default()
    }

    pub fn with_buffers(buffers: Vec<Vec<f64>>) -> Self {
        Memory { buffers, written: None }
    }

    pub fn track_writes(&mut self) {
        self.written = Some(self.buffers.iter().map(|b| vec![false; b.len()]).collect());
    }

    pub fn alloc(&mut self, data: Vec<f64>) -> View {
        let view = View { buf: self.buffers.len() as u32, off: 0, len: data.len() as u32 };
        if let Some(w) = &mut self.written {
            w.push(vec![false; data.len()]);
        }
        self.buffers.push(data);
        view
    }

    fn write(&mut self, buf: usize, at: usize, v: f64) {
        self.buffers[buf][at] = v;
        if let Some(w) = &mut self.written {
            w[buf][at] = true;
        }
    }
}

/// Thread coordinates visible to a kernel through `blockIdx.x` and friends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThreadCtx {
    pub block_idx: u32,
    pub block_dim: u32,
    pub thread_idx: u32,
    pub grid_dim: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub value: Option<f64>,
    /// Final contents of every array argument, `None` for scalars.
    pub arrays: Vec<Option<Vec<f64>>>,
    pub ops: OpCount,
}

impl EvalOutput {
    pub fn array(&self, param: usize) -> &[f64] {
        self.arrays[param].as_deref().unwrap_or(&[])
    }
}

/// A checked, lowered module ready to run. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct Program {
    functions: Vec<CFunction>,
    by_name: HashMap<String, usize>,
}

impl Program {
    pub fn compile(m: &Module) -> Result<Program> {
        check_module(m)?;
        let ids: HashMap<&str, usize> = m.functions.iter().enumerate().map(|(i, f)| (f.name.as_str(), i)).collect();
        let functions = m.functions.iter().map(|f| compile_function(f, &ids)).collect::<Result<Vec<_>, _>>()?;
        let by_name = m.functions.iter().enumerate().map(|(i, f)| (f.name.clone(), i)).collect();
        Ok(Program { functions, by_name })
    }

    pub fn function_id(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn param_types(&self, id: usize) -> Vec<Type> {
        self.functions[id].params.iter().map(|p| p.ty).collect()
    }

    pub fn param_names(&self, id: usize) -> Vec<&str> {
        self.functions[id].params.iter().map(|p| p.name.as_str()).collect()
    }

    /// Evaluate `name` on owned arguments.
    pub fn call(&self, name: &str, args: &[Arg]) -> Result<EvalOutput, EvalError> {
        let id = self.function_id(name).ok_or_else(|| EvalError::UnknownFunction(name.to_string()))?;
        let mut mem = Memory::new();
        let vals = self.bind_args(id, args, &mut mem)?;
        let mut ops = OpCount::default();
        let value = self.call_raw(id, vals, &mut mem, &mut ops, None)?;
        let arrays = vals_to_arrays(args, &mem);
        Ok(EvalOutput { value, arrays, ops })
    }

    /// Lay out `args` in `mem` and return the frame values for a call of `id`.
    pub fn bind_args(&self, id: usize, args: &[Arg], mem: &mut Memory) -> Result<Vec<Val>, EvalError> {
        let f = &self.functions[id];
        if f.params.len() != args.len() {
            return Err(EvalError::Arity { function: f.name.clone(), expected: f.params.len(), found: args.len() });
        }
        f.params
            .iter()
            .zip(args)
            .map(|(p, a)| match (p.ty, a) {
                (Type::Real, Arg::Real(r)) => Ok(Val::Real(*r)),
                (Type::Real, Arg::Int(i)) => Ok(Val::Real(*i as f64)),
                (Type::Int, Arg::Int(i)) => Ok(Val::Int(*i)),
                (Type::Int, Arg::Real(r)) if r.fract() == 0.0 => Ok(Val::Int(*r as i64)),
                (Type::RealArray, Arg::Array(data)) => Ok(Val::Arr(mem.alloc(data.clone()))),
                _ => Err(EvalError::Type {
                    context: format!("{}({})", f.name, p.name),
                    message: format!("expected {}, got {a:?}", p.ty.keyword()),
                }),
            })
            .collect()
    }

    /// Hot-path entry: caller owns memory and counters.
    pub fn call_raw(
        &self,
        id: usize,
        args: Vec<Val>,
        mem: &mut Memory,
        ops: &mut OpCount,
        thread: Option<ThreadCtx>,
    ) -> Result<Option<f64>, EvalError> {
        let mut m = Machine { program: self, mem, ops, thread };
        Ok(m.call(id, args, 0)?.map(machine::real))
    }
}

fn vals_to_arrays(args: &[Arg], mem: &Memory) -> Vec<Option<Vec<f64>>> {
    let mut next = 0usize;
    args.iter()
        .map(|a| match a {
            Arg::Array(_) => {
                let out = mem.buffers[next].clone();
                next += 1;
                Some(out)
            }
            _ => None,
        })
        .collect()
}

/// Check, lower and run one function of a module.
pub fn eval(m: &Module, name: &str, args: &[Arg]) -> Result<EvalOutput> {
    Ok(Program::compile(m)?.call(name, args)?)
}

/// Gradient-to-primal arithmetic cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostRatio {
    /// `OpCount(gradient).total() / OpCount(primal).total()`, `+inf` for a free primal.
    pub ratio: f64,
    pub primal: OpCount,
    pub gradient: OpCount,
    pub warning: Option<String>,
}

/// Compare the cost of `gradient` against `primal` at `args`. The gradient's
/// extra parameters are adjoint slots and get zero-filled storage shaped
/// like the primal parameter each one belongs to.
pub fn cost_ratio(m: &Module, primal: &str, gradient: &str, args: &[Arg]) -> Result<CostRatio> {
    let program = Program::compile(m)?;
    let p_out = program.call(primal, args)?;
    let gid = program.function_id(gradient).ok_or_else(|| EvalError::UnknownFunction(gradient.to_string()))?;
    let pid = program.function_id(primal).ok_or_else(|| EvalError::UnknownFunction(primal.to_string()))?;
    let g_args = with_zero_slots(&program, pid, gid, args);
    let g_out = program.call(gradient, &g_args)?;
    let (p, g) = (p_out.ops.total(), g_out.ops.total());
    let (ratio, warning) = if p == 0 {
        (f64::INFINITY, Some(format!("`{primal}` performs no arithmetic; ratio reported as +inf")))
    } else {
        (g as f64 / p as f64, None)
    };
    Ok(CostRatio { ratio, primal: p_out.ops, gradient: g_out.ops, warning })
}

/// Append zero slots for each gradient parameter past the primal's, matching
/// `_d_<param>` to the primal argument it adjoins.
pub fn with_zero_slots(program: &Program, primal: usize, gradient: usize, args: &[Arg]) -> Vec<Arg> {
    let pnames = program.param_names(primal);
    let gnames = program.param_names(gradient);
    let mut out = args.to_vec();
    for slot in &gnames[pnames.len().min(gnames.len())..] {
        let base = slot.strip_prefix("_d_").unwrap_or(slot);
        let arg = pnames.iter().position(|n| *n == base).map(|i| args[i].zeros_like()).unwrap_or(Arg::Array(vec![0.0]));
        out.push(arg);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    const GAUSS: &str = "device host real gauss(real x, real p, real sigma) { real t = -(x-p)*(x-p)/(2*sigma*sigma); return pow(2*PI, -0.5) * pow(sigma, -0.5) * exp(t); }";

    fn run(src: &str, name: &str, args: &[Arg]) -> Result<EvalOutput> {
        eval(&parse(src).unwrap(), name, args)
    }

    #[test]
    fn gauss_values() {
        let at = |x: f64| run(GAUSS, "gauss", &[x.into(), 0.0.into(), 1.0.into()]).unwrap().value.unwrap();
        // (2*pi)^-0.5 and (2*pi)^-0.5 * e^-0.5 computed by hand.
        assert!((at(0.0) - 0.3989422804014327).abs() < 1e-15);
        assert!((at(1.0) - 0.2419707245191434).abs() < 1e-15);
    }

    #[test]
    fn identity_costs_nothing() {
        let out = run("real f(real x) { return x; }", "f", &[7.0.into()]).unwrap();
        assert_eq!(out.value, Some(7.0));
        assert_eq!(out.ops.total(), 0);
    }

    #[test]
    fn counts_each_node_once() {
        let out = run("real f(real x) { real y = -x * x + 1; y += sin(x) / 2; return y; }", "f", &[2.0.into()]).unwrap();
        assert_eq!((out.ops.adds, out.ops.muls, out.ops.divs, out.ops.intrinsics), (3, 1, 1, 1));
        assert_eq!(out.ops.total(), 6);
    }

    #[test]
    fn domain_errors() {
        for (src, arg) in [
            ("real f(real x) { return log(x); }", -1.0),
            ("real f(real x) { return sqrt(x); }", -1.0),
            ("real f(real x) { return 1 / x; }", 0.0),
            ("real f(real x) { return pow(x, 0.5); }", -2.0),
        ] {
            let err = run(src, "f", &[arg.into()]).unwrap_err();
            assert!(matches!(err, crate::Error::Eval(EvalError::Domain { .. })), "{src}: {err}");
        }
    }

    #[test]
    fn empty_loop_range_is_not_an_error() {
        let out = run("real f(int n) { real s = 1; for (int i = 5; i < n; i++) { s = s * 2; } return s; }", "f", &[Arg::Int(2)]).unwrap();
        assert_eq!(out.value, Some(1.0));
    }

    #[test]
    fn arrays_are_references() {
        let src = "device void add(real[] d, real v) { d[0] += v; } void f(real[] x, real[] out) { for (int i = 0; i < 3; i++) { add(out[i], x[i] * 2); } }";
        let out = run(src, "f", &[Arg::Array(vec![1.0, 2.0, 3.0]), Arg::Array(vec![0.5; 3])]).unwrap();
        assert_eq!(out.array(1), &[2.5, 4.5, 6.5]);
        let err = run("real f(real[] x) { return x[3]; }", "f", &[Arg::Array(vec![0.0; 3])]).unwrap_err();
        assert!(matches!(err, crate::Error::Eval(EvalError::Bounds { index: 3, .. })));
    }

    #[test]
    fn tape_must_balance() {
        let err = run("real f(real x) { __push(x); return x; }", "f", &[1.0.into()]).unwrap_err();
        assert!(matches!(err, crate::Error::Eval(EvalError::TapeImbalance { values: 1, .. })));
        let err = run("real f(real x) { real y = __pop(); return y; }", "f", &[1.0.into()]).unwrap_err();
        assert!(matches!(err, crate::Error::Eval(EvalError::TapeUnderflow { .. })));
        let ok = run("real f(real x) { real y = x; __push(y); __pushc(3); y = 2; int k = __popc(); y = __pop(); return y * k; }", "f", &[1.5.into()]).unwrap();
        assert_eq!(ok.value, Some(4.5));
        assert_eq!((ok.ops.pushes, ok.ops.pops), (2, 2));
    }

    #[test]
    fn arity_and_types() {
        let m = parse("real f(real x, int n) { return x * n; }").unwrap();
        assert!(matches!(eval(&m, "f", &[1.0.into()]), Err(crate::Error::Eval(EvalError::Arity { .. }))));
        assert!(matches!(eval(&m, "f", &[1.0.into(), 0.5.into()]), Err(crate::Error::Eval(EvalError::Type { .. }))));
        assert_eq!(eval(&m, "f", &[1.5.into(), Arg::Int(4)]).unwrap().value, Some(6.0));
    }

    #[test]
    fn constant_primal_ratio_is_infinite() {
        let m = parse("real f() { return 1; } void f_grad() { }").unwrap();
        let r = cost_ratio(&m, "f", "f_grad", &[]).unwrap();
        assert!(r.ratio.is_infinite());
        assert!(r.warning.is_some());
    }
}
