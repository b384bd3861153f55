//! Emulated one-dimensional kernel launches and the write-hazard check that
//! guards them.
//!
//! A launch runs the kernel once per global index `i < N` with
//! `blockIdx.x`, `blockDim.x` and `threadIdx.x` bound to that thread's
//! coordinates. Threads past `N` are not dispatched. Work is split into
//! contiguous index ranges across a scoped worker pool; each worker runs on
//! its own copy of the buffers and the elements it wrote are merged back in
//! worker order.

mod race;

pub use race::{race_check, Access, AccessReport, BufferAccess};

use std::collections::BTreeMap;

use crate::dsl::ast::{Module, Type};
use crate::error::{EvalError, Result};
use crate::eval::{Memory, OpCount, Program, ThreadCtx, Val};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaunchConfig {
    pub grid_dim: u32,
    pub block_dim: u32,
    pub n: u32,
}

impl LaunchConfig {
    pub fn new(grid_dim: u32, block_dim: u32, n: u32) -> Result<LaunchConfig, LaunchError> {
        if grid_dim == 0 || block_dim == 0 || n == 0 {
            return Err(LaunchError::Config(format!("grid {grid_dim}, block {block_dim} and N {n} must all be positive")));
        }
        let threads = grid_dim as u64 * block_dim as u64;
        if threads > u32::MAX as u64 {
            return Err(LaunchError::Config(format!("{threads} threads overflow the index type")));
        }
        if threads < n as u64 {
            return Err(LaunchError::Config(format!("{grid_dim} x {block_dim} threads do not cover N = {n}")));
        }
        Ok(LaunchConfig { grid_dim, block_dim, n })
    }

    /// The usual `<<<N / block + 1, block>>>` shape.
    pub fn from_n(n: u32, block_dim: u32) -> Result<LaunchConfig, LaunchError> {
        if block_dim == 0 {
            return Err(LaunchError::Config("block size must be positive".into()));
        }
        LaunchConfig::new(n / block_dim + 1, block_dim, n)
    }

    pub fn threads(&self) -> u64 {
        self.grid_dim as u64 * self.block_dim as u64
    }

    pub fn thread(&self, global: u32) -> ThreadIndex {
        ThreadIndex { block_idx: global / self.block_dim, block_dim: self.block_dim, thread_idx: global % self.block_dim }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThreadIndex {
    pub block_idx: u32,
    pub block_dim: u32,
    pub thread_idx: u32,
}

impl ThreadIndex {
    pub fn global(&self) -> u64 {
        self.block_idx as u64 * self.block_dim as u64 + self.thread_idx as u64
    }

    fn ctx(&self, grid_dim: u32) -> ThreadCtx {
        ThreadCtx { block_idx: self.block_idx, block_dim: self.block_dim, thread_idx: self.thread_idx, grid_dim }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LaunchError {
    #[error("no function named `{0}`")]
    UnknownKernel(String),
    #[error("`{0}` is not a global kernel")]
    NotAKernel(String),
    #[error("invalid launch configuration: {0}")]
    Config(String),
    #[error("no buffer supplied for parameter `{0}`")]
    MissingBuffer(String),
    #[error("no value supplied for scalar parameter `{0}`")]
    MissingScalar(String),
    #[error("buffer `{name}` has {len} elements but is indexed by thread up to N = {n}")]
    BufferLength { name: String, len: usize, n: u32 },
    #[error("refusing to launch `{kernel}`: {buffers} written by several threads")]
    Hazard { kernel: String, buffers: String, report: AccessReport },
    #[error("thread {thread}: {source}")]
    Thread { thread: u64, source: EvalError },
}

/// Named inputs of a launch. Integer parameters named `N` or `n` default to
/// the launch size when not given.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LaunchArgs {
    pub buffers: BTreeMap<String, Vec<f64>>,
    pub scalars: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LaunchOptions {
    /// Launch even when the race check reports a hazard.
    pub allow_hazards: bool,
    /// Worker count; `None` uses the available hardware parallelism.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaunchOutcome {
    pub buffers: BTreeMap<String, Vec<f64>>,
    pub report: AccessReport,
    pub total_threads: u64,
    /// Threads that executed the body (those with `i < N`).
    pub active_threads: u64,
    /// Statements executed by each global index, `0` past `N`.
    pub statements: Vec<u64>,
    pub ops: OpCount,
}

struct Prepared {
    program: Program,
    id: usize,
    scalars: Vec<Option<Val>>,
    /// Buffer index per array parameter, in parameter order.
    arrays: Vec<(usize, String)>,
    memory: Memory,
    report: AccessReport,
}

fn prepare(m: &Module, kernel: &str, cfg: &LaunchConfig, args: &LaunchArgs, opts: &LaunchOptions) -> Result<Prepared> {
    let f = m.function(kernel).ok_or_else(|| LaunchError::UnknownKernel(kernel.to_string()))?;
    if !f.is_global() {
        return Err(LaunchError::NotAKernel(kernel.to_string()).into());
    }
    let report = race_check(m, kernel);
    if report.has_hazard() && !opts.allow_hazards {
        let buffers = report.hazards().map(|(n, _)| format!("`{n}`")).collect::<Vec<_>>().join(", ");
        return Err(LaunchError::Hazard { kernel: kernel.to_string(), buffers, report }.into());
    }
    let program = Program::compile(m)?;
    let id = program.function_id(kernel).expect("compiled");
    let mut memory = Memory::new();
    let mut scalars = Vec::new();
    let mut arrays = Vec::new();
    for p in &f.params {
        match p.ty {
            Type::RealArray => {
                let data = args.buffers.get(&p.name).ok_or_else(|| LaunchError::MissingBuffer(p.name.clone()))?;
                if report.get(&p.name) == Some(Access::PrivatePerThread) && data.len() < cfg.n as usize {
                    return Err(LaunchError::BufferLength { name: p.name.clone(), len: data.len(), n: cfg.n }.into());
                }
                let view = memory.alloc(data.clone());
                arrays.push((view.buf as usize, p.name.clone()));
                scalars.push(Some(Val::Arr(view)));
            }
            Type::Real => {
                let v = args.scalars.get(&p.name).ok_or_else(|| LaunchError::MissingScalar(p.name.clone()))?;
                scalars.push(Some(Val::Real(*v)));
            }
            Type::Int => {
                let v = match args.scalars.get(&p.name) {
                    Some(v) if v.fract() == 0.0 => *v as i64,
                    Some(_) => return Err(LaunchError::MissingScalar(format!("{} (not an integer)", p.name)).into()),
                    None if p.name == "N" || p.name == "n" => cfg.n as i64,
                    None => return Err(LaunchError::MissingScalar(p.name.clone()).into()),
                };
                scalars.push(Some(Val::Int(v)));
            }
        }
    }
    Ok(Prepared { program, id, scalars, arrays, memory, report })
}

impl Prepared {
    fn run_range(&self, cfg: &LaunchConfig, range: std::ops::Range<u32>, mem: &mut Memory, stmts: &mut [u64], ops: &mut OpCount) -> Result<(), LaunchError> {
        let vals: Vec<Val> = self.scalars.iter().map(|v| v.expect("bound")).collect();
        for (slot, i) in range.enumerate() {
            let mut thread_ops = OpCount::default();
            let ctx = cfg.thread(i).ctx(cfg.grid_dim);
            self.program
                .call_raw(self.id, vals.clone(), mem, &mut thread_ops, Some(ctx))
                .map_err(|source| LaunchError::Thread { thread: i as u64, source })?;
            stmts[slot] = thread_ops.statements;
            ops.accumulate(&thread_ops);
        }
        Ok(())
    }

    fn outcome(self, cfg: &LaunchConfig, memory: Memory, statements: Vec<u64>, ops: OpCount) -> LaunchOutcome {
        let mut buffers = BTreeMap::new();
        let mut memory = memory;
        for (buf, name) in &self.arrays {
            buffers.insert(name.clone(), std::mem::take(&mut memory.buffers[*buf]));
        }
        LaunchOutcome { buffers, report: self.report, total_threads: cfg.threads(), active_threads: cfg.n as u64, statements, ops }
    }
}

/// Run `kernel` once per global index in `[0, N)` on a worker pool.
pub fn launch(m: &Module, kernel: &str, cfg: &LaunchConfig, args: &LaunchArgs, opts: &LaunchOptions) -> Result<LaunchOutcome> {
    let prep = prepare(m, kernel, cfg, args, opts)?;
    let n = cfg.n;
    let workers = opts
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|w| w.get()).unwrap_or(1))
        .clamp(1, n as usize);
    let chunk = n.div_ceil(workers as u32);
    let ranges: Vec<_> = (0..workers as u32).map(|w| (w * chunk).min(n)..((w + 1) * chunk).min(n)).filter(|r| !r.is_empty()).collect();

    let results: Vec<Result<(Memory, Vec<u64>, OpCount), LaunchError>> = std::thread::scope(|s| {
        let handles: Vec<_> = ranges
            .iter()
            .map(|r| {
                let prep = &prep;
                let r = r.clone();
                s.spawn(move || {
                    let mut mem = prep.memory.clone();
                    mem.track_writes();
                    let mut stmts = vec![0; r.len()];
                    let mut ops = OpCount::default();
                    prep.run_range(cfg, r, &mut mem, &mut stmts, &mut ops)?;
                    Ok((mem, stmts, ops))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    let mut merged = prep.memory.clone();
    let mut statements = vec![0; cfg.threads() as usize];
    let mut ops = OpCount::default();
    for (r, res) in ranges.iter().zip(results) {
        let (mem, stmts, worker_ops) = res?;
        let written = mem.written.as_ref().expect("tracking enabled");
        for (b, flags) in written.iter().enumerate() {
            for (k, w) in flags.iter().enumerate() {
                if *w {
                    merged.buffers[b][k] = mem.buffers[b][k];
                }
            }
        }
        statements[r.start as usize..r.end as usize].copy_from_slice(&stmts);
        ops.accumulate(&worker_ops);
    }
    Ok(prep.outcome(cfg, merged, statements, ops))
}

/// Reference execution: every active thread in index order on one memory.
pub fn launch_sequential(m: &Module, kernel: &str, cfg: &LaunchConfig, args: &LaunchArgs, opts: &LaunchOptions) -> Result<LaunchOutcome> {
    let prep = prepare(m, kernel, cfg, args, opts)?;
    let mut mem = prep.memory.clone();
    let mut statements = vec![0; cfg.threads() as usize];
    let mut ops = OpCount::default();
    prep.run_range(cfg, 0..cfg.n, &mut mem, &mut statements[..cfg.n as usize], &mut ops)?;
    Ok(prep.outcome(cfg, mem, statements, ops))
}
