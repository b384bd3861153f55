//! The test corpus: the programs every derivative mode is checked against,
//! each with a sampler for well-conditioned evaluation points (arguments of
//! log and sqrt at least 0.1, divisors at least 0.1 away from zero).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ad::complete_module;
use crate::dsl::{parse, Module};
use crate::eval::Arg;
use crate::fitbench::model;

pub const GAUSS: &str = include_str!("../corpus/gauss.dsl");
pub const POLYNOMIAL: &str = include_str!("../corpus/polynomial.dsl");
pub const RATIONAL: &str = include_str!("../corpus/rational.dsl");
pub const PIECEWISE: &str = include_str!("../corpus/piecewise.dsl");
pub const SUMN: &str = include_str!("../corpus/sumn.dsl");
pub const POWMIX: &str = include_str!("../corpus/powmix.dsl");

/// Components in the corpus instance of the Gaussian-sum model.
pub const GAUSSUM_K: usize = 2;

pub struct CorpusFunction {
    pub name: &'static str,
    pub source: String,
    pub wrt: Vec<&'static str>,
    pub sample: fn(&mut ChaCha8Rng) -> Vec<Arg>,
}

impl CorpusFunction {
    /// The parsed source with any referenced derivatives generated.
    pub fn module(&self) -> Module {
        let m = parse(&self.source).expect("corpus parses");
        complete_module(&m).expect("corpus derivatives generate")
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// Every scalar function of the corpus.
pub fn functions() -> Vec<CorpusFunction> {
    vec![
        CorpusFunction {
            name: "gauss",
            source: GAUSS.into(),
            wrt: vec!["x", "p", "sigma"],
            sample: |r| vec![Arg::Real(uniform(r, -2.0, 2.0)), Arg::Real(uniform(r, -2.0, 2.0)), Arg::Real(uniform(r, 0.5, 2.0))],
        },
        CorpusFunction {
            name: "polynomial",
            source: POLYNOMIAL.into(),
            wrt: vec!["x", "y"],
            sample: |r| vec![Arg::Real(uniform(r, -2.0, 2.0)), Arg::Real(uniform(r, -2.0, 2.0))],
        },
        CorpusFunction {
            name: "rational",
            source: RATIONAL.into(),
            wrt: vec!["x", "y"],
            sample: |r| vec![Arg::Real(uniform(r, -2.0, 2.0)), Arg::Real(uniform(r, -2.0, 2.0))],
        },
        CorpusFunction {
            name: "piecewise",
            source: PIECEWISE.into(),
            wrt: vec!["x", "y"],
            sample: |r| vec![Arg::Real(uniform(r, -2.0, 2.0)), Arg::Real(uniform(r, -2.0, 2.0))],
        },
        CorpusFunction {
            name: "sumN",
            source: SUMN.into(),
            wrt: vec!["x"],
            sample: |r| vec![Arg::Array((0..8).map(|_| uniform(r, -1.5, 1.5)).collect()), Arg::Int(8)],
        },
        CorpusFunction {
            name: "powmix",
            source: POWMIX.into(),
            wrt: vec!["x", "y"],
            sample: |r| vec![Arg::Real(uniform(r, -1.2, 1.2)), Arg::Real(uniform(r, 0.2, 3.0))],
        },
        CorpusFunction {
            name: model::FUNCTION,
            source: model::source(GAUSSUM_K),
            wrt: vec!["p"],
            sample: |r| {
                let mut p = model::truth(GAUSSUM_K);
                for v in &mut p {
                    *v *= uniform(r, 0.8, 1.2);
                }
                vec![Arg::Array(p), Arg::Real(uniform(r, -5.0, 5.0)), Arg::Real(uniform(r, 10.0, 100.0))]
            },
        },
    ]
}

/// `sumN` with its array length; the family used for cost-scaling checks.
pub fn sumn_args(n: usize, rng: &mut ChaCha8Rng) -> Vec<Arg> {
    vec![Arg::Array((0..n).map(|_| uniform(rng, -1.5, 1.5)).collect()), Arg::Int(n as i64)]
}
