//! Central finite differences, the reference every generated derivative is
//! checked against and the numerical side of the fit benchmark.

use std::collections::HashMap;

use crate::dsl::ast::{Module, Type};
use crate::error::{Error, EvalError, Result};
use crate::eval::{Arg, OpCount, Program};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiffConfig {
    /// Fixed steps by coordinate position (array elements expanded in order).
    pub overrides: HashMap<usize, f64>,
}

impl DiffConfig {
    /// `cbrt(eps) * max(1, |x|)` unless coordinate `j` has an override.
    pub fn step(&self, j: usize, x: f64) -> f64 {
        if let Some(h) = self.overrides.get(&j) {
            return *h;
        }
        default_step(x)
    }
}

pub fn default_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// One perturbable coordinate: a scalar parameter or an element of an array one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coord {
    pub param: usize,
    pub elem: Option<usize>,
}

/// Expand parameter indices into coordinates, arrays element-wise.
pub fn coordinates(point: &[Arg], wrt: &[usize]) -> Vec<Coord> {
    let mut out = Vec::new();
    for &p in wrt {
        match &point[p] {
            Arg::Array(a) => out.extend((0..a.len()).map(|e| Coord { param: p, elem: Some(e) })),
            _ => out.push(Coord { param: p, elem: None }),
        }
    }
    out
}

fn get(point: &[Arg], c: Coord) -> f64 {
    match (&point[c.param], c.elem) {
        (Arg::Array(a), Some(e)) => a[e],
        (a, _) => a.as_real().unwrap_or(0.0),
    }
}

fn set(point: &mut [Arg], c: Coord, v: f64) {
    match (&mut point[c.param], c.elem) {
        (Arg::Array(a), Some(e)) => a[e] = v,
        (a, _) => *a = Arg::Real(v),
    }
}

/// Gradient of scalar function `name` at `point` by central differences,
/// with the operation counts of all `2 * coordinates` primal runs.
pub fn central_gradient_program(
    program: &Program,
    name: &str,
    point: &[Arg],
    wrt: &[usize],
    cfg: &DiffConfig,
) -> Result<(Vec<f64>, OpCount)> {
    let id = program.function_id(name).ok_or_else(|| EvalError::UnknownFunction(name.to_string()))?;
    let types = program.param_types(id);
    let names = program.param_names(id);
    if point.len() != types.len() {
        return Err(EvalError::Arity { function: name.to_string(), expected: types.len(), found: point.len() }.into());
    }
    for &p in wrt {
        match types.get(p) {
            Some(Type::Real) | Some(Type::RealArray) => {}
            Some(Type::Int) => return Err(Error::Input(format!("parameter `{}` of `{name}` is not real-typed", names[p]))),
            None => return Err(Error::Input(format!("`{name}` has no parameter {p}"))),
        }
    }

    let mut ops = OpCount::default();
    let mut grad = Vec::new();
    let mut work = point.to_vec();
    for (j, c) in coordinates(point, wrt).into_iter().enumerate() {
        let x = get(point, c);
        let h = cfg.step(j, x);
        let label = match c.elem {
            Some(e) => format!("{}[{e}]", names[c.param]),
            None => names[c.param].to_string(),
        };
        let mut side = |sign: char, work: &mut Vec<Arg>| -> Result<f64> {
            set(work, c, if sign == '+' { x + h } else { x - h });
            let out = program.call(name, work).map_err(|source| Error::Perturbed { coordinate: label.clone(), sign, h, source })?;
            ops.accumulate(&out.ops);
            out.value.ok_or_else(|| Error::Input(format!("`{name}` returns no value")))
        };
        let plus = side('+', &mut work)?;
        let minus = side('-', &mut work)?;
        set(&mut work, c, x);
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok((grad, ops))
}

/// [`central_gradient_program`] on a module that has not been lowered yet.
pub fn central_gradient(m: &Module, name: &str, point: &[Arg], wrt: &[usize], cfg: &DiffConfig) -> Result<(Vec<f64>, OpCount)> {
    central_gradient_program(&Program::compile(m)?, name, point, wrt, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::complete_module;
    use crate::corpus::GAUSS;
    use crate::dsl::parse;
    use crate::eval::eval;

    fn grad(src: &str, name: &str, point: &[Arg], wrt: &[usize]) -> (Vec<f64>, OpCount) {
        central_gradient(&complete_module(&parse(src).unwrap()).unwrap(), name, point, wrt, &DiffConfig::default()).unwrap()
    }

    #[test]
    fn quadratic_is_exact() {
        let (g, _) = grad("real sq(real x) { return x * x; }", "sq", &[Arg::Real(3.0)], &[0]);
        assert!((g[0] - 6.0).abs() <= 1e-9);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let (g, _) = grad("real k(real x) { return 4.5; }", "k", &[Arg::Real(-2.0)], &[0]);
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn gauss_matches_closed_form() {
        let (g, _) = grad(GAUSS, "gauss", &[Arg::Real(1.0), Arg::Real(0.0), Arg::Real(1.0)], &[0, 1]);
        // d/dx of the density at one standard deviation: -phi(1).
        let phi1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((g[0] + phi1).abs() <= 1e-6 * phi1);
        assert!((g[1] - phi1).abs() <= 1e-6 * phi1);
    }

    #[test]
    fn cost_is_two_primals_per_coordinate() {
        let src = "real s(real[] x, real y) { real t = 0; for (int i = 0; i < 3; i++) { t += x[i] * y; } return t; }";
        let point = [Arg::Array(vec![1.0, 2.0, 3.0]), Arg::Real(0.5)];
        let primal = eval(&parse(src).unwrap(), "s", &point).unwrap().ops;
        let (g, ops) = grad(src, "s", &point, &[0, 1]);
        assert_eq!(g.len(), 4);
        assert_eq!(ops.total(), 8 * primal.total());
        assert!((g[3] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn step_rule() {
        let cfg = DiffConfig::default();
        assert_eq!(cfg.step(0, 0.0), f64::EPSILON.cbrt());
        assert_eq!(cfg.step(0, -100.0), 100.0 * f64::EPSILON.cbrt());
        let cfg = DiffConfig { overrides: HashMap::from([(1, 1e-3)]) };
        assert_eq!(cfg.step(1, 50.0), 1e-3);
    }

    #[test]
    fn domain_error_names_the_perturbation() {
        let m = parse("real l(real x) { return log(x); }").unwrap();
        let err = central_gradient(&m, "l", &[Arg::Real(0.0)], &[0], &DiffConfig::default()).unwrap_err();
        match err {
            Error::Perturbed { coordinate, sign, .. } => assert_eq!((coordinate.as_str(), sign), ("x", '-')),
            other => panic!("unexpected {other:?}"),
        }
    }
}
