//! Source-transformation automatic differentiation for a small C-like
//! language with CUDA-style qualifiers.
//!
//! The pipeline is: [`dsl::parse`] a module, check it with [`semantic`],
//! emit derivative functions with [`ad`] (forward tangents, reverse-mode
//! gradients, Hessians), and run primal and derivative code on the counting
//! interpreter in [`eval`]. [`parallel`] emulates kernel launches over the
//! interpreter and flags adjoint write hazards, [`numdiff`] is the
//! finite-difference baseline and [`fitbench`] fits sums of Gaussians with
//! either gradient provider.
//!
//! ```
//! use adc_core::ad::differentiate_gradient;
//! use adc_core::dsl::{parse, Module};
//! use adc_core::eval::{Arg, Program};
//!
//! # fn main() -> adc_core::Result<()> {
//! let m = parse(adc_core::corpus::GAUSS)?;
//! let g = differentiate_gradient(m.function("gauss").unwrap(), &["x", "p"])?;
//! let p = Program::compile(&Module::new(vec![g.derived]))?;
//! let slots = || Arg::Array(vec![0.0]);
//! let out = p.call("gauss_grad_0_1", &[1.0.into(), 0.0.into(), 1.0.into(), slots(), slots()])?;
//! assert!((out.array(3)[0] + 0.2419707245191434).abs() < 1e-15);
//! # Ok(())
//! # }
//! ```

pub mod ad;
pub mod corpus;
pub mod dsl;
pub mod error;
pub mod eval;
pub mod fitbench;
pub mod numdiff;
pub mod parallel;
pub mod semantic;

pub use error::{Error, Result};
