//! Hessians by forward mode over the emitted gradient.

use super::{differentiate_forward, differentiate_gradient, TangentProgram};
use crate::dsl::ast::*;
use crate::dsl::{parse, print_function};
use crate::error::{DiffError, Error, Result};
use crate::eval::{Arg, Memory, OpCount, Program, Val};

#[derive(Debug, Clone, PartialEq)]
pub struct HessianResult {
    /// Row-major; row and column order follow `wrt`, arrays expanded element-wise.
    pub matrix: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub ops: OpCount,
}

impl HessianResult {
    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    /// `max |H[i][j] - H[j][i]|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.matrix[i][j] - self.matrix[j][i]).abs());
            }
        }
        worst
    }
}

struct Column {
    wrt: String,
    fid: usize,
    tangent: TangentProgram,
}

/// Gradient plus one tangent function per `wrt` parameter, compiled once so
/// the Hessian can be evaluated at many points.
pub struct HessianPlan {
    program: Program,
    primal: FunctionDef,
    wrt: Vec<String>,
    slots: Vec<String>,
    columns: Vec<Column>,
    /// Source of the generated gradient and tangent functions.
    pub generated: Module,
}

impl HessianPlan {
    pub fn new(f: &FunctionDef, wrt: &[&str]) -> Result<HessianPlan> {
        let grad = differentiate_gradient(f, wrt)?;
        // Work from the printed gradient, as a user of the emitted code would.
        let reparsed = parse(&print_function(&grad.derived)).map_err(DiffError::from)?;
        let g = reparsed.functions.into_iter().next().expect("one function");
        let mut generated = vec![g.clone()];
        let mut tangents = Vec::new();
        for w in &grad.wrt {
            let t = differentiate_forward(&g, w)?;
            generated.push(t.derived.clone());
            tangents.push((w.clone(), t));
        }
        let mut module = Module::new(vec![f.clone()]);
        module.functions.extend(generated.iter().cloned());
        let program = Program::compile(&module)?;
        let columns = tangents
            .into_iter()
            .map(|(wrt, tangent)| Column { wrt, fid: program.function_id(&tangent.derived.name).expect("compiled"), tangent })
            .collect();
        Ok(HessianPlan { program, primal: f.clone(), wrt: grad.wrt, slots: grad.slots, columns, generated: Module::new(generated) })
    }

    pub fn eval(&self, point: &[Arg]) -> Result<HessianResult> {
        let f = &self.primal;
        if point.len() != f.params.len() {
            return Err(DiffError::Dimension { expected: f.params.len(), found: point.len() }.into());
        }
        let arg_of = |name: &str| &point[f.param_index(name).expect("wrt is a parameter")];
        let len_of = |name: &str| match arg_of(name) {
            Arg::Array(a) => a.len(),
            _ => 1,
        };
        let mut labels = Vec::new();
        let mut coords = Vec::new();
        for (wi, w) in self.wrt.iter().enumerate() {
            match arg_of(w) {
                Arg::Array(a) => {
                    for k in 0..a.len() {
                        labels.push(format!("{w}[{k}]"));
                        coords.push((wi, Some(k)));
                    }
                }
                _ => {
                    labels.push(w.clone());
                    coords.push((wi, None));
                }
            }
        }
        let n = coords.len();
        let mut matrix = vec![vec![0.0; n]; n];
        let mut ops = OpCount::default();
        for (col, &(wi, elem)) in coords.iter().enumerate() {
            let column = &self.columns[wi];
            let mut args: Vec<Arg> = point.to_vec();
            args.extend(self.wrt.iter().map(|w| Arg::Array(vec![0.0; len_of(w)])));
            for tp in &column.tangent.tangent_params {
                let len = if let Some(slot) = self.slots.iter().position(|s| *s == tp.of) {
                    len_of(&self.wrt[slot])
                } else {
                    len_of(&tp.of)
                };
                let mut seed = vec![0.0; len];
                if tp.of == column.wrt {
                    seed[elem.unwrap_or(0)] = 1.0;
                }
                args.push(Arg::Array(seed));
            }
            let mut mem = Memory::new();
            let vals: Vec<Val> = self.program.bind_args(column.fid, &args, &mut mem)?;
            self.program.call_raw(column.fid, vals, &mut mem, &mut ops, None)?;
            // Buffers are allocated in argument order, so tangent k of the
            // appended tail sits after the primal arrays and the slots.
            let first_tangent = args.iter().take(f.params.len() + self.slots.len()).filter(|a| matches!(a, Arg::Array(_))).count();
            for (row, &(ri, relem)) in coords.iter().enumerate() {
                let slot = &self.slots[ri];
                if let Some(pos) = column.tangent.tangent_params.iter().position(|t| t.of == *slot) {
                    matrix[row][col] = mem.buffers[first_tangent + pos][relem.unwrap_or(0)];
                }
            }
        }
        Ok(HessianResult { matrix, labels, ops })
    }
}

/// Full Hessian of `f` with respect to `wrt` at `point`.
pub fn hessian(f: &FunctionDef, wrt: &[&str], point: &[Arg]) -> Result<HessianResult, Error> {
    HessianPlan::new(f, wrt)?.eval(point)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(src: &str, wrt: &[&str], at: &[f64]) -> HessianResult {
        let m = parse(src).unwrap();
        let args: Vec<Arg> = at.iter().map(|v| Arg::Real(*v)).collect();
        HessianPlan::new(&m.functions[0], wrt).unwrap().eval(&args).unwrap()
    }

    #[test]
    fn square_and_product() {
        assert_eq!(h("real f(real x) { return x * x; }", &["x"], &[3.0]).matrix, vec![vec![2.0]]);
        assert_eq!(h("real f(real x, real y) { return x * y; }", &["x", "y"], &[3.0, 5.0]).matrix, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn gauss_away_from_the_inflection_point() {
        // d2/dx2 of c * exp(-(x - p)^2 / 2) is c * exp(..) * ((x - p)^2 - 1).
        let src = crate::corpus::GAUSS;
        let m = parse(src).unwrap();
        let r = HessianPlan::new(&m.functions[0], &["x", "p"]).unwrap();
        let at = [Arg::Real(0.5), Arg::Real(-0.25), Arg::Real(1.0)];
        let out = r.eval(&at).unwrap();
        let d = 0.75f64;
        let want = (-0.5 * d * d).exp() / (2.0 * std::f64::consts::PI).sqrt() * (d * d - 1.0);
        assert!((out.matrix[0][0] - want).abs() < 1e-14);
        assert!((out.matrix[0][1] + want).abs() < 1e-14);
        assert!(out.asymmetry() < 1e-15);
        assert_eq!(out.labels, ["x", "p"]);
    }

    #[test]
    fn wrong_point_length() {
        let m = parse("real f(real x) { return x * x; }").unwrap();
        let plan = HessianPlan::new(&m.functions[0], &["x"]).unwrap();
        assert!(plan.eval(&[]).is_err());
    }
}
