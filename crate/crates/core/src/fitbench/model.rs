//! Sum-of-Gaussians model, in the DSL and as a reference implementation.

use std::f64::consts::PI;
use std::fmt::Write;

/// Name of the generated per-bin prediction function.
pub const FUNCTION: &str = "gausspred";

/// Flat parameters `[A_1, mu_1, sigma_1, ..., A_K, mu_K, sigma_K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussSumModel {
    pub params: Vec<f64>,
}

impl GaussSumModel {
    pub fn new(params: Vec<f64>) -> Self {
        assert!(!params.is_empty() && params.len() % 3 == 0, "parameters come in (A, mu, sigma) triples");
        GaussSumModel { params }
    }

    pub fn k(&self) -> usize {
        self.params.len() / 3
    }

    /// `sum_k A_k exp(-(x - mu_k)^2 / (2 sigma_k^2))`
    pub fn value(&self, x: f64) -> f64 {
        self.params.chunks(3).map(|c| c[0] * (-0.5 * ((x - c[1]) / c[2]).powi(2)).exp()).sum()
    }

    /// Integral over the whole real line.
    pub fn integral(&self) -> f64 {
        (2.0 * PI).sqrt() * self.params.chunks(3).map(|c| c[0] * c[2]).sum::<f64>()
    }

    /// Upper bound on `value`, used as the rejection-sampling envelope.
    pub fn peak_bound(&self) -> f64 {
        self.params.chunks(3).map(|c| c[0].abs()).sum()
    }
}

/// DSL source of `gausspred(p, x, scale) = scale * model(x)` for `k` components.
pub fn source(k: usize) -> String {
    let mut s = String::new();
    writeln!(s, "// Expected bin content of a {k}-component Gaussian sum at bin center x.").unwrap();
    writeln!(s, "real {FUNCTION}(real[] p, real x, real scale) {{").unwrap();
    writeln!(s, "    real m = 0;").unwrap();
    writeln!(s, "    for (int k = 0; k < {k}; k++) {{").unwrap();
    writeln!(s, "        real a = p[3 * k];").unwrap();
    writeln!(s, "        real mu = p[3 * k + 1];").unwrap();
    writeln!(s, "        real sg = p[3 * k + 2];").unwrap();
    writeln!(s, "        real u = (x - mu) / sg;").unwrap();
    writeln!(s, "        real g = exp(-0.5 * u * u);").unwrap();
    writeln!(s, "        m += a * g;").unwrap();
    writeln!(s, "    }}").unwrap();
    writeln!(s, "    return scale * m;").unwrap();
    writeln!(s, "}}").unwrap();
    s
}

/// Generating parameters: unit amplitudes, centers spread evenly over
/// (-5, 5), widths shrinking with `k` so neighbours stay separated. For
/// `k = 1` this is (1, 0, 1.5).
pub fn truth(k: usize) -> Vec<f64> {
    let spacing = 10.0 / k as f64;
    (0..k).flat_map(|i| [1.0, -5.0 + (i as f64 + 0.5) * spacing, 1.5 / k as f64]).collect()
}

/// Starting point: amplitudes and widths at 80% of the truth, centers
/// shifted by 3% of the component spacing. For `k = 1` this is (0.8, 0.3, 1.2).
pub fn initial(k: usize) -> Vec<f64> {
    let spacing = 10.0 / k as f64;
    truth(k).chunks(3).flat_map(|c| [0.8 * c[0], c[1] + 0.03 * spacing, 0.8 * c[2]]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;
    use crate::eval::{eval, Arg};

    #[test]
    fn single_component_setup() {
        assert_eq!(truth(1), vec![1.0, 0.0, 1.5]);
        let init = initial(1);
        assert!((init[0] - 0.8).abs() < 1e-15 && (init[1] - 0.3).abs() < 1e-15 && (init[2] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn dsl_matches_reference() {
        for k in [1, 3] {
            let m = parse(&source(k)).unwrap();
            let p = initial(k);
            let model = GaussSumModel::new(p.clone());
            for x in [-4.0, -0.3, 0.0, 2.2] {
                let out = eval(&m, FUNCTION, &[Arg::Array(p.clone()), Arg::Real(x), Arg::Real(7.0)]).unwrap();
                let want = 7.0 * model.value(x);
                assert!((out.value.unwrap() - want).abs() <= 1e-14 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn integral_of_unit_gaussian() {
        let m = GaussSumModel::new(vec![1.0, 0.0, 1.0]);
        // Trapezoid rule over +-12 sigma as an independent check.
        let h = 1e-3;
        let sum: f64 = (-12_000..=12_000).map(|i| m.value(i as f64 * h) * h).sum();
        assert!((m.integral() - sum).abs() < 1e-9);
    }
}
