use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use super::histogram::Histogram;
use super::model::{self, FUNCTION};
use super::FitError;
use crate::ad::{differentiate_gradient, gradient_name, HessianPlan};
use crate::dsl::parse;
use crate::error::{DiffError, Error, Result};
use crate::eval::{Arg, Memory, OpCount, Program, Val, View};
use crate::numdiff::DiffConfig;

/// Source of the per-bin model partials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provider {
    AdReverse,
    Numeric,
}

impl Provider {
    pub const ALL: [Provider; 2] = [Provider::AdReverse, Provider::Numeric];

    pub fn name(self) -> &'static str {
        match self {
            Provider::AdReverse => "ad-reverse",
            Provider::Numeric => "numeric",
        }
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Provider {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, FitError> {
        match s {
            "ad-reverse" | "ad" => Ok(Provider::AdReverse),
            "numeric" | "num" => Ok(Provider::Numeric),
            _ => Err(FitError::UnknownProvider(s.to_string())),
        }
    }
}

/// Per-coordinate scaling of the descent direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    /// Plain steepest descent.
    Identity,
    /// Divide by the Gauss-Newton diagonal `2 sum_i (d pred_i / d theta_j)^2 / n_i`.
    /// The parameters differ in scale by orders of magnitude, and without
    /// this the unit initial step is useless.
    GaussNewtonDiagonal,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Maximum number of iterations (gradient evaluations).
    pub budget: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
    pub scaling: Scaling,
    /// Damped Newton steps from the generated Hessian instead of the scaled gradient.
    pub use_hessian: bool,
    pub sigma_floor: f64,
    pub armijo_c1: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            budget: 1000,
            grad_tol: 1e-6,
            rel_tol: 1e-12,
            scaling: Scaling::GaussNewtonDiagonal,
            use_hessian: false,
            sigma_floor: 1e-3,
            armijo_c1: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientNorm,
    RelativeDecrease,
    Budget,
    LineSearch,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub chi2: f64,
    pub iterations: usize,
    pub grad_evals: usize,
    /// Total time spent producing gradients.
    pub grad_wall: Duration,
    pub converged: bool,
    pub stop: StopReason,
    /// Accepted iterates, starting with the initial point.
    pub history: Vec<Vec<f64>>,
    pub clamp_events: usize,
    /// Operations for one pass of the model over all bins.
    pub primal_ops: OpCount,
    /// Operations for one chi-square gradient (per-bin partials only).
    pub grad_ops: OpCount,
}

impl FitResult {
    pub fn wall_per_gradient(&self) -> Duration {
        if self.grad_evals == 0 {
            Duration::ZERO
        } else {
            self.grad_wall / self.grad_evals as u32
        }
    }
}

/// A histogram, a `k`-component model of it, and the compiled prediction
/// function with its generated gradient.
pub struct FitProblem {
    pub k: usize,
    /// `events * width / norm`.
    pub scale: f64,
    /// Non-empty bins as (center, count).
    pub bins: Vec<(f64, f64)>,
    program: Program,
    primal: usize,
    gradient: usize,
    hessian: Option<HessianPlan>,
}

impl FitProblem {
    pub fn new(h: &Histogram, k: usize, norm: f64) -> Result<FitProblem> {
        if k == 0 {
            return Err(FitError::EmptyKList.into());
        }
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(FitError::Invalid(format!("normalization must be positive, got {norm}")).into());
        }
        let mut module = parse(&model::source(k)).map_err(DiffError::from)?;
        let g = differentiate_gradient(&module.functions[0], &["p"])?;
        module.functions.push(g.derived);
        let program = Program::compile(&module)?;
        let primal = program.function_id(FUNCTION).expect("compiled");
        let gradient = program.function_id(&gradient_name(&module.functions[0], &["p"])).expect("compiled");
        Ok(FitProblem {
            k,
            scale: h.entries() * h.width() / norm,
            bins: h.nonempty(),
            program,
            primal,
            gradient,
            hessian: None,
        })
    }

    /// Also generate the Hessian of the prediction, for `FitOptions::use_hessian`.
    pub fn with_hessian(mut self) -> Result<FitProblem> {
        let m = parse(&model::source(self.k)).map_err(DiffError::from)?;
        self.hessian = Some(HessianPlan::new(&m.functions[0], &["p"])?);
        Ok(self)
    }

    pub fn params(&self) -> usize {
        3 * self.k
    }

    fn check(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.params() {
            return Err(FitError::Dimension { expected: self.params(), found: params.len() }.into());
        }
        Ok(())
    }

    fn memory(&self, params: &[f64], slot: bool) -> (Memory, View, View) {
        let mut mem = Memory::new();
        let p = mem.alloc(params.to_vec());
        let d = if slot { mem.alloc(vec![0.0; params.len()]) } else { p };
        (mem, p, d)
    }

    fn predict_with(&self, mem: &mut Memory, p: View, x: f64, ops: &mut OpCount) -> Result<f64> {
        let vals = vec![Val::Arr(p), Val::Real(x), Val::Real(self.scale)];
        Ok(self.program.call_raw(self.primal, vals, mem, ops, None)?.expect("real function"))
    }

    /// Predicted content of every non-empty bin.
    pub fn predictions(&self, params: &[f64]) -> Result<(Vec<f64>, OpCount)> {
        self.check(params)?;
        let (mut mem, p, _) = self.memory(params, false);
        let mut ops = OpCount::default();
        let pred = self.bins.iter().map(|&(x, _)| self.predict_with(&mut mem, p, x, &mut ops)).collect::<Result<_>>()?;
        Ok((pred, ops))
    }

    pub fn chi2(&self, params: &[f64]) -> Result<f64> {
        let (pred, _) = self.predictions(params)?;
        Ok(chi2_of(&self.bins, &pred))
    }

    /// Row-major `bins x params` Jacobian of the predictions.
    pub fn partials(&self, params: &[f64], provider: Provider) -> Result<(Vec<f64>, OpCount)> {
        self.check(params)?;
        let n = params.len();
        let mut jac = Vec::with_capacity(self.bins.len() * n);
        let mut ops = OpCount::default();
        match provider {
            Provider::AdReverse => {
                let (mut mem, p, d) = self.memory(params, true);
                for &(x, _) in &self.bins {
                    mem.buffers[d.buf as usize].fill(0.0);
                    let vals = vec![Val::Arr(p), Val::Real(x), Val::Real(self.scale), Val::Arr(d)];
                    self.program.call_raw(self.gradient, vals, &mut mem, &mut ops, None)?;
                    jac.extend_from_slice(&mem.buffers[d.buf as usize]);
                }
            }
            Provider::Numeric => {
                let cfg = DiffConfig::default();
                let (mut mem, p, _) = self.memory(params, false);
                let steps: Vec<f64> = params.iter().enumerate().map(|(j, &v)| cfg.step(j, v)).collect();
                let buf = p.buf as usize;
                for &(x, _) in &self.bins {
                    for j in 0..n {
                        mem.buffers[buf][j] = params[j] + steps[j];
                        let plus = self.predict_with(&mut mem, p, x, &mut ops)?;
                        mem.buffers[buf][j] = params[j] - steps[j];
                        let minus = self.predict_with(&mut mem, p, x, &mut ops)?;
                        mem.buffers[buf][j] = params[j];
                        jac.push((plus - minus) / (2.0 * steps[j]));
                    }
                }
            }
        }
        Ok((jac, ops))
    }

    /// Gradient of chi-square from the predictions at `params` and the
    /// provider's partials, plus the Gauss-Newton diagonal.
    fn gradient(&self, params: &[f64], pred: &[f64], provider: Provider) -> Result<(Vec<f64>, Vec<f64>, OpCount)> {
        let n = params.len();
        let (jac, ops) = self.partials(params, provider)?;
        let mut g = vec![0.0; n];
        let mut diag = vec![0.0; n];
        for (i, &(_, count)) in self.bins.iter().enumerate() {
            let r = 2.0 * (pred[i] - count) / count;
            let row = &jac[i * n..(i + 1) * n];
            for j in 0..n {
                g[j] += r * row[j];
                diag[j] += 2.0 * row[j] * row[j] / count;
            }
        }
        Ok((g, diag, ops))
    }

    /// Full chi-square Hessian `sum_i 2/n_i (J_i J_i^T + (pred_i - n_i) H_i)`.
    fn chi2_hessian(&self, params: &[f64], pred: &[f64], grad_jac: &[f64]) -> Result<DMatrix<f64>> {
        let plan = self.hessian.as_ref().ok_or_else(|| Error::Input("the fit problem was built without a Hessian".into()))?;
        let n = params.len();
        let mut h = DMatrix::zeros(n, n);
        for (i, &(x, count)) in self.bins.iter().enumerate() {
            let hb = plan.eval(&[Arg::Array(params.to_vec()), Arg::Real(x), Arg::Real(self.scale)])?;
            let row = &grad_jac[i * n..(i + 1) * n];
            for a in 0..n {
                for b in 0..n {
                    h[(a, b)] += 2.0 / count * (row[a] * row[b] + (pred[i] - count) * hb.matrix[a][b]);
                }
            }
        }
        Ok(h)
    }
}

pub fn chi2_of(bins: &[(f64, f64)], pred: &[f64]) -> f64 {
    bins.iter().zip(pred).map(|(&(_, n), &p)| (n - p) * (n - p) / n).sum()
}

fn clamp_sigmas(params: &mut [f64], floor: f64) -> usize {
    let mut hits = 0;
    for (k, s) in params.iter_mut().skip(2).step_by(3).enumerate() {
        if *s < floor {
            log::warn!("sigma_{k} = {s} clamped to {floor}");
            *s = floor;
            hits += 1;
        }
    }
    hits
}

/// Minimize chi-square from `init` by scaled gradient descent with an
/// Armijo backtracking line search.
pub fn fit(problem: &FitProblem, provider: Provider, init: &[f64], opts: &FitOptions) -> Result<FitResult> {
    problem.check(init)?;
    for (k, s) in init.iter().skip(2).step_by(3).enumerate() {
        if !(*s > 0.0) {
            return Err(FitError::NonPositiveSigma { component: k, value: *s }.into());
        }
    }
    let mut x = init.to_vec();
    let (mut pred, primal_ops) = problem.predictions(&x)?;
    let mut f = chi2_of(&problem.bins, &pred);
    let mut res = FitResult {
        params: x.clone(),
        chi2: f,
        iterations: 0,
        grad_evals: 0,
        grad_wall: Duration::ZERO,
        converged: false,
        stop: StopReason::Budget,
        history: vec![x.clone()],
        clamp_events: 0,
        primal_ops,
        grad_ops: OpCount::default(),
    };

    for _ in 0..opts.budget {
        let t0 = Instant::now();
        let (g, diag, ops) = problem.gradient(&x, &pred, provider)?;
        res.grad_wall += t0.elapsed();
        if res.grad_evals == 0 {
            res.grad_ops = ops;
        }
        res.grad_evals += 1;

        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= opts.grad_tol {
            res.converged = true;
            res.stop = StopReason::GradientNorm;
            break;
        }
        let dir = direction(problem, &x, &pred, &g, &diag, provider, opts)?;

        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let hits = clamp_sigmas(&mut trial, opts.sigma_floor);
            let (tp, _) = problem.predictions(&trial)?;
            let tf = chi2_of(&problem.bins, &tp);
            let slope: f64 = g.iter().zip(trial.iter().zip(&x)).map(|(gj, (t, a))| gj * (t - a)).sum();
            if tf.is_finite() && tf <= f + opts.armijo_c1 * slope {
                res.clamp_events += hits;
                accepted = Some((trial, tp, tf));
                break;
            }
            step *= 0.5;
        }
        res.iterations += 1;
        let Some((nx, np, nf)) = accepted else {
            res.stop = StopReason::LineSearch;
            break;
        };
        let rel = (f - nf) / f.abs().max(f64::MIN_POSITIVE);
        x = nx;
        pred = np;
        f = nf;
        res.history.push(x.clone());
        if rel <= opts.rel_tol {
            res.converged = true;
            res.stop = StopReason::RelativeDecrease;
            break;
        }
    }
    res.params = x;
    res.chi2 = f;
    Ok(res)
}

fn direction(problem: &FitProblem, x: &[f64], pred: &[f64], g: &[f64], diag: &[f64], provider: Provider, opts: &FitOptions) -> Result<Vec<f64>> {
    let scaled = || -> Vec<f64> {
        match opts.scaling {
            Scaling::Identity => g.iter().map(|v| -v).collect(),
            Scaling::GaussNewtonDiagonal => g.iter().zip(diag).map(|(v, d)| if *d > 0.0 { -v / d } else { -v }).collect(),
        }
    };
    if !opts.use_hessian {
        return Ok(scaled());
    }
    let (jac, _) = problem.partials(x, provider)?;
    let h = problem.chi2_hessian(x, pred, &jac)?;
    let n = x.len();
    let rhs = -DVector::from_column_slice(g);
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0f64, f64::max).max(1e-12);
    let mut lambda = 0.0;
    for _ in 0..12 {
        let damped = &h + DMatrix::identity(n, n) * (lambda * scale);
        if let Some(ch) = damped.cholesky() {
            let d = ch.solve(&rhs);
            if d.dot(&DVector::from_column_slice(g)) < 0.0 {
                return Ok(d.iter().copied().collect());
            }
        }
        lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
    }
    Ok(scaled())
}
