//! Static classification of how a kernel's threads touch its array parameters.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::dsl::ast::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Access {
    /// Every write goes to the element at the thread's own global index.
    PrivatePerThread,
    /// Never written.
    SharedRead,
    /// Written at a location other threads may also write.
    SharedWriteHazard,
}

impl Access {
    pub fn name(self) -> &'static str {
        match self {
            Access::PrivatePerThread => "private-per-thread",
            Access::SharedRead => "shared-read",
            Access::SharedWriteHazard => "shared-write-hazard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BufferAccess {
    pub access: Access,
    /// What made a hazard a hazard, for the report.
    pub reason: Option<String>,
}

/// Classification of every array parameter the kernel touches.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessReport {
    pub kernel: String,
    pub buffers: BTreeMap<String, BufferAccess>,
}

impl AccessReport {
    pub fn get(&self, buffer: &str) -> Option<Access> {
        self.buffers.get(buffer).map(|b| b.access)
    }

    pub fn is_empty(&self) -> bool {
        self.buffers.is_empty()
    }

    pub fn hazards(&self) -> impl Iterator<Item = (&str, &BufferAccess)> {
        self.buffers.iter().filter(|(_, b)| b.access == Access::SharedWriteHazard).map(|(n, b)| (n.as_str(), b))
    }

    pub fn has_hazard(&self) -> bool {
        self.hazards().next().is_some()
    }
}

impl fmt::Display for AccessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kernel {}", self.kernel)?;
        for (name, b) in &self.buffers {
            write!(f, "  {name}: {}", b.access.name())?;
            if let Some(r) = &b.reason {
                write!(f, " ({r})")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// How a function writes one of its array parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Writes {
    No,
    Yes,
}

/// Per-parameter write flags of `name`, following calls transitively.
fn param_writes(m: &Module, name: &str, memo: &mut HashMap<String, Vec<Writes>>, visiting: &mut HashSet<String>) -> Vec<Writes> {
    if let Some(w) = memo.get(name) {
        return w.clone();
    }
    let Some(f) = m.function(name) else {
        return Vec::new();
    };
    if !visiting.insert(name.to_string()) {
        // Recursion: assume the worst.
        return vec![Writes::Yes; f.params.len()];
    }
    let mut out = vec![Writes::No; f.params.len()];
    let pos = |n: &str| f.params.iter().position(|p| p.name == n && p.ty == Type::RealArray);
    walk_stmts(&f.body, &mut |s| match &s.kind {
        StmtKind::Assign { target: LValue { name, index: Some(_) }, .. } => {
            if let Some(i) = pos(name) {
                out[i] = Writes::Yes;
            }
        }
        StmtKind::Call { name: callee, args } => {
            let inner = param_writes(m, callee, memo, visiting);
            for (a, w) in args.iter().zip(inner) {
                if w == Writes::Yes {
                    if let ExprKind::Var(n) | ExprKind::Index(n, _) = &a.kind {
                        if let Some(i) = pos(n) {
                            out[i] = Writes::Yes;
                        }
                    }
                }
            }
        }
        _ => {}
    });
    visiting.remove(name);
    memo.insert(name.to_string(), out.clone());
    out
}

fn is_var(e: &Expr, name: &str) -> bool {
    matches!(&e.kind, ExprKind::Var(n) if n == name)
}

/// `blockIdx.x * blockDim.x + threadIdx.x` in any operand order, or a copy
/// of a variable already known to hold it.
fn is_global_index(e: &Expr, tids: &HashSet<String>) -> bool {
    match &e.kind {
        ExprKind::Var(n) => tids.contains(n),
        ExprKind::Binary(BinOp::Add, a, b) => {
            let prod = |e: &Expr| match &e.kind {
                ExprKind::Binary(BinOp::Mul, x, y) => {
                    (is_var(x, "blockIdx.x") && is_var(y, "blockDim.x")) || (is_var(x, "blockDim.x") && is_var(y, "blockIdx.x"))
                }
                _ => false,
            };
            (prod(a) && is_var(b, "threadIdx.x")) || (is_var(a, "threadIdx.x") && prod(b))
        }
        _ => false,
    }
}

/// Classify the kernel's array parameters. Patterns the analysis does not
/// recognise are reported as hazards.
pub fn race_check(m: &Module, kernel: &str) -> AccessReport {
    let mut report = AccessReport { kernel: kernel.to_string(), buffers: BTreeMap::new() };
    let Some(f) = m.function(kernel) else {
        return report;
    };
    let arrays: HashSet<&str> = f.params.iter().filter(|p| p.ty == Type::RealArray).map(|p| p.name.as_str()).collect();

    // Integer scalars holding the global index: declared from it, never reassigned.
    let mut reassigned = HashSet::new();
    let mut decl_count: HashMap<&str, usize> = HashMap::new();
    walk_stmts(&f.body, &mut |s| match &s.kind {
        StmtKind::Assign { target: LValue { name, index: None }, .. } => {
            reassigned.insert(name.clone());
        }
        StmtKind::Decl { name, .. } => *decl_count.entry(name.as_str()).or_default() += 1,
        StmtKind::For { var, .. } => {
            reassigned.insert(var.clone());
        }
        _ => {}
    });
    let mut tids = HashSet::new();
    walk_stmts(&f.body, &mut |s| {
        if let StmtKind::Decl { name, ty: Type::Int, init } = &s.kind {
            if decl_count[name.as_str()] == 1 && !reassigned.contains(name) && is_global_index(init, &tids) {
                tids.insert(name.clone());
            }
        }
    });

    let mut memo = HashMap::new();
    let note = |report: &mut AccessReport, name: &str, access: Access, reason: Option<String>| {
        let e = report.buffers.entry(name.to_string()).or_insert(BufferAccess { access, reason: None });
        if access >= e.access {
            if access > e.access || e.reason.is_none() {
                e.reason = reason;
            }
            e.access = access;
        }
    };
    let at_tid = |idx: &Expr| matches!(&idx.kind, ExprKind::Var(n) if tids.contains(n));

    let mut reads = Vec::new();
    walk_stmts(&f.body, &mut |s| {
        let mut exprs: Vec<&Expr> = Vec::new();
        match &s.kind {
            StmtKind::Decl { init, .. } => exprs.push(init),
            StmtKind::Assign { target, value, .. } => {
                exprs.push(value);
                if let Some(idx) = &target.index {
                    exprs.push(idx);
                    if arrays.contains(target.name.as_str()) {
                        if at_tid(idx) {
                            note(&mut report, &target.name, Access::PrivatePerThread, None);
                        } else {
                            let why = format!("written at `{}`, not at the thread's own index", crate::dsl::print_expr(idx));
                            note(&mut report, &target.name, Access::SharedWriteHazard, Some(why));
                        }
                    }
                }
            }
            StmtKind::Return(e) | StmtKind::Push(_, e) => exprs.push(e),
            StmtKind::If { cond, .. } => exprs.push(cond),
            StmtKind::For { start, end, .. } => {
                exprs.push(start);
                exprs.push(end);
            }
            StmtKind::Call { name: callee, args } => {
                let writes = param_writes(m, callee, &mut memo, &mut HashSet::new());
                let callee_params = m.function(callee).map(|g| g.params.clone()).unwrap_or_default();
                for (k, a) in args.iter().enumerate() {
                    let writes_k = writes.get(k).copied().unwrap_or(Writes::Yes);
                    let pname = callee_params.get(k).map(|p| p.name.as_str()).unwrap_or("?");
                    let to_array = callee_params.get(k).map(|p| p.ty == Type::RealArray).unwrap_or(true);
                    match &a.kind {
                        ExprKind::Var(n) if arrays.contains(n.as_str()) => {
                            if to_array && writes_k == Writes::Yes {
                                let why = match pname.strip_prefix("_d_") {
                                    Some(base) => format!("every thread accumulates the adjoint of `{base}` through `{callee}`"),
                                    None => format!("every thread writes it through `{callee}({pname})`"),
                                };
                                note(&mut report, n, Access::SharedWriteHazard, Some(why));
                            } else {
                                reads.push((n.clone(), false));
                            }
                        }
                        ExprKind::Index(n, idx) if arrays.contains(n.as_str()) => {
                            exprs.push(idx);
                            if to_array && writes_k == Writes::Yes {
                                if at_tid(idx) {
                                    note(&mut report, n, Access::PrivatePerThread, None);
                                } else {
                                    let why = format!("element `{}` written through `{callee}`", crate::dsl::print_expr(a));
                                    note(&mut report, n, Access::SharedWriteHazard, Some(why));
                                }
                            } else {
                                reads.push((n.clone(), at_tid(idx)));
                            }
                        }
                        _ => exprs.push(a),
                    }
                }
            }
        }
        for e in exprs {
            e.walk(&mut |x| match &x.kind {
                ExprKind::Index(n, idx) if arrays.contains(n.as_str()) => reads.push((n.clone(), at_tid(idx))),
                ExprKind::Var(n) if arrays.contains(n.as_str()) => reads.push((n.clone(), false)),
                _ => {}
            });
        }
    });
    // A private array read anywhere but the own element sees other threads' writes.
    for (name, own) in reads {
        match report.get(&name) {
            None => note(&mut report, &name, Access::SharedRead, None),
            Some(Access::PrivatePerThread) if !own => {
                note(&mut report, &name, Access::SharedWriteHazard, Some("read at another thread's element while threads write it".into()))
            }
            _ => {}
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::complete_module;
    use crate::corpus::GAUSS;
    use crate::dsl::parse;

    #[test]
    fn per_thread_kernel_is_private() {
        let r = race_check(&complete_module(&parse(GAUSS).unwrap()).unwrap(), "compute");
        assert_eq!(r.get("dx"), Some(Access::PrivatePerThread));
        assert_eq!(r.get("dp"), Some(Access::PrivatePerThread));
        assert_eq!(r.get("x"), Some(Access::SharedRead));
        assert_eq!(r.get("p"), Some(Access::SharedRead));
        assert!(!r.has_hazard());
    }

    #[test]
    fn shared_adjoint_slot_is_a_hazard() {
        let r = race_check(&complete_module(&parse(GAUSS).unwrap()).unwrap(), "compute_shared");
        assert_eq!(r.get("dsigma"), Some(Access::SharedWriteHazard));
        assert!(r.buffers["dsigma"].reason.as_deref().unwrap().contains("adjoint of `sigma`"));
        assert_eq!(r.get("dx"), Some(Access::PrivatePerThread));
    }

    #[test]
    fn empty_kernel_empty_report() {
        let r = race_check(&parse("global void k(real[] a, int N) { }").unwrap(), "k");
        assert!(r.is_empty());
    }

    #[test]
    fn unrecognised_index_is_conservative() {
        let src = "global void k(real[] a, int N) { int i = blockIdx.x * blockDim.x + threadIdx.x; int j = i; if (i < N) { a[j] = 1; a[i + 1] = 2; } }";
        let r = race_check(&parse(src).unwrap(), "k");
        assert_eq!(r.get("a"), Some(Access::SharedWriteHazard));
        let src = "global void k(real[] a, int N) { int i = threadIdx.x + blockDim.x * blockIdx.x; if (i < N) { a[i] = a[i] * 2; } }";
        assert_eq!(race_check(&parse(src).unwrap(), "k").get("a"), Some(Access::PrivatePerThread));
        let src = "global void k(real[] a, int N) { int i = blockIdx.x * blockDim.x + threadIdx.x; if (i < N) { a[i] = a[0]; } }";
        assert_eq!(race_check(&parse(src).unwrap(), "k").get("a"), Some(Access::SharedWriteHazard));
        let src = "global void k(real[] a, int N) { int i = threadIdx.x; if (i < N) { a[i] = 1; } }";
        assert_eq!(race_check(&parse(src).unwrap(), "k").get("a"), Some(Access::SharedWriteHazard));
    }
}
