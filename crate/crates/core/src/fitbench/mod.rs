//! Histogram fitting with a sum of Gaussians, comparing generated reverse-mode
//! gradients against central differences as the parameter count grows.
//!
//! The objective is Neyman's chi-square over non-empty bins,
//!
//! ```text
//! chi2 = sum_i (n_i - pred_i)^2 / n_i,    pred_i = model(c_i) * events * width / norm
//! ```
//!
//! where `c_i` is the bin center and `norm` is a fixed constant supplied by the
//! caller (the benchmark uses the integral of the generating model). Keeping
//! `norm` fixed, rather than dividing by the integral of the current
//! parameters, leaves the amplitudes identifiable.

pub mod bench;
pub mod fit;
pub mod histogram;
pub mod model;

pub use bench::{bench_scaling, plot_table, read_csv, write_csv, BenchConfig, BenchRow};
pub use fit::{fit, FitOptions, FitProblem, FitResult, Provider, Scaling, StopReason};
pub use histogram::{sample_histogram, Histogram};
pub use model::GaussSumModel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("histogram range [{lo}, {hi}) is empty")]
    DegenerateRange { lo: f64, hi: f64 },
    #[error("expected {expected} parameters, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("initial width sigma_{component} = {value} must be positive")]
    NonPositiveSigma { component: usize, value: f64 },
    #[error("no Gaussian counts given")]
    EmptyKList,
    #[error("unknown gradient provider `{0}` (expected ad-reverse or numeric)")]
    UnknownProvider(String),
    #[error("{0}")]
    Invalid(String),
}
