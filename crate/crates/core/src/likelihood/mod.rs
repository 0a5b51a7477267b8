//! The structured covariance `S(σ)` and the quasi-log-likelihood `H(σ)`.

mod cov;
mod engine;

pub use cov::{build_s, CoefficientPoints, StructuredCov};
pub use engine::{EvalMode, GradMode, Gradient, Hessian, QuasiLikEngine, BANDWIDTH_THRESHOLD};
