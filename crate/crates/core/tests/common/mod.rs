//! Gradient drivers shared by the integration suites.
#![allow(dead_code)]

use adc_core::ad::{differentiate_forward, differentiate_gradient, HessianPlan};
use adc_core::corpus::CorpusFunction;
use adc_core::dsl::Module;
use adc_core::eval::{with_zero_slots, Arg, OpCount, Program};
use adc_core::numdiff::{central_gradient_program, DiffConfig};

pub const SEED: u64 = 20260;

/// Everything needed to differentiate one corpus function repeatedly.
pub struct Harness {
    pub name: String,
    pub wrt: Vec<String>,
    pub wrt_idx: Vec<usize>,
    pub gradient: String,
    /// (wrt name, tangent function name, tangent params as `of` names)
    pub tangents: Vec<(String, String, Vec<String>)>,
    pub program: Program,
    pub module: Module,
}

impl Harness {
    pub fn new(cf: &CorpusFunction) -> Harness {
        let mut module = cf.module();
        let f = module.function(cf.name).expect("corpus function").clone();
        let wrt: Vec<&str> = cf.wrt.clone();
        let g = differentiate_gradient(&f, &wrt).expect("gradient");
        let mut tangents = Vec::new();
        let mut extra = vec![g.derived.clone()];
        for w in &wrt {
            let t = differentiate_forward(&f, w).expect("tangent");
            tangents.push((w.to_string(), t.derived.name.clone(), t.tangent_params.iter().map(|p| p.of.clone()).collect()));
            extra.push(t.derived);
        }
        for e in extra {
            if module.function(&e.name).is_none() {
                module.functions.push(e);
            }
        }
        let program = Program::compile(&module).expect("compiles");
        let wrt_idx = wrt.iter().map(|w| f.param_index(w).unwrap()).collect();
        Harness {
            name: cf.name.to_string(),
            wrt: wrt.iter().map(|w| w.to_string()).collect(),
            wrt_idx,
            gradient: g.derived.name,
            tangents,
            program,
            module,
        }
    }

    fn param(&self, name: &str) -> usize {
        let id = self.program.function_id(&self.name).unwrap();
        self.program.param_names(id).iter().position(|n| *n == name).unwrap()
    }

    pub fn primal(&self, args: &[Arg]) -> (f64, OpCount) {
        let out = self.program.call(&self.name, args).expect("primal runs");
        (out.value.unwrap(), out.ops)
    }

    /// Flattened reverse-mode gradient (arrays element-wise, `wrt` order).
    pub fn reverse(&self, args: &[Arg]) -> (Vec<f64>, OpCount) {
        let pid = self.program.function_id(&self.name).unwrap();
        let gid = self.program.function_id(&self.gradient).unwrap();
        let full = with_zero_slots(&self.program, pid, gid, args);
        let out = self.program.call(&self.gradient, &full).expect("gradient runs");
        let mut g = Vec::new();
        for k in 0..self.wrt.len() {
            g.extend_from_slice(out.array(args.len() + k));
        }
        (g, out.ops)
    }

    /// The same gradient, one tangent pass per coordinate.
    pub fn forward(&self, args: &[Arg]) -> (Vec<f64>, OpCount) {
        let mut g = Vec::new();
        let mut ops = OpCount::default();
        for (w, fname, tparams) in &self.tangents {
            let wi = self.param(w);
            let n = match &args[wi] {
                Arg::Array(a) => a.len(),
                _ => 1,
            };
            for k in 0..n {
                let mut full = args.to_vec();
                for of in tparams {
                    let mut seed = args[self.param(of)].zeros_like();
                    if of == w {
                        if let Arg::Array(s) = &mut seed {
                            s[k] = 1.0;
                        }
                    }
                    full.push(seed);
                }
                let out = self.program.call(fname, &full).expect("tangent runs");
                ops.accumulate(&out.ops);
                g.push(out.value.unwrap());
            }
        }
        (g, ops)
    }

    pub fn central(&self, args: &[Arg]) -> (Vec<f64>, OpCount) {
        central_gradient_program(&self.program, &self.name, args, &self.wrt_idx, &DiffConfig::default()).expect("numdiff")
    }

    pub fn hessian_plan(&self) -> HessianPlan {
        let f = self.module.function(&self.name).unwrap();
        let wrt: Vec<&str> = self.wrt.iter().map(String::as_str).collect();
        HessianPlan::new(f, &wrt).expect("hessian plan")
    }
}

/// `|a - b| <= tol * max(1, |a|, |b|)`, so values near zero are compared absolutely.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0)).fold(0.0, f64::max)
}

/// Central differences of the AD gradient, one column per coordinate.
pub fn fd_of_gradient(h: &Harness, args: &[Arg]) -> Vec<Vec<f64>> {
    let mut coords = Vec::new();
    for &p in &h.wrt_idx {
        match &args[p] {
            Arg::Array(a) => coords.extend((0..a.len()).map(|e| (p, Some(e)))),
            _ => coords.push((p, None)),
        }
    }
    let n = coords.len();
    let mut cols = vec![vec![0.0; n]; n];
    for (j, &(p, e)) in coords.iter().enumerate() {
        let x = match (&args[p], e) {
            (Arg::Array(a), Some(e)) => a[e],
            (a, _) => a.as_real().unwrap(),
        };
        let step = 1e-5 * x.abs().max(1.0);
        let at = |v: f64| {
            let mut a = args.to_vec();
            match (&mut a[p], e) {
                (Arg::Array(arr), Some(e)) => arr[e] = v,
                (slot, _) => *slot = Arg::Real(v),
            }
            h.reverse(&a).0
        };
        let (plus, minus) = (at(x + step), at(x - step));
        for i in 0..n {
            cols[i][j] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    cols
}
