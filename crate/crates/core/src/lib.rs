//! Weighted particle clouds as discrete probability measures, exact optimal
//! transport between them, set-valued dynamics, and numerical certification
//! of exponential Lyapunov decay.
//!
//! The crate is organised bottom-up:
//!
//! * [`measure`] — discrete measures, moments, push-forward
//! * [`transport`] — exact W2 plans, barycentric displacements
//! * [`dynamics`] — set-valued velocity fields, Euler particle flows, a-priori bounds
//! * [`hamiltonian`] — the set-valued Hamiltonian and its modulus estimate
//! * [`lyapunov`] — Lyapunov evaluation, HJ residuals, decay and viability runs
//! * [`mayer`] — terminal-cost value estimation with DPP checks
//! * [`scenario`] — canonical ball-field and linear-field configurations

// Parameter guards are written as `!(x > 0.0)` on purpose: the negation is
// what routes NaN into the rejection branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod hamiltonian;
pub mod lyapunov;
pub mod mayer;
pub mod measure;
pub mod sampling;
pub mod scenario;
pub mod tol;
pub mod transport;

use thiserror::Error;

/// Crate-wide error type. Construction errors are deliberately precise about
/// which invariant failed; numerical routines only error on structural
/// problems (dimension mismatches, blow-ups), never on check outcomes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty support: a measure needs at least one point")]
    EmptySupport,
    #[error("zero total mass: weights must have positive sum")]
    ZeroTotalMass,
    #[error("negative weight at index {index}: {value}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("non-finite coordinate at point {index}")]
    NonFiniteCoordinate { index: usize },
    #[error("length mismatch: {points} points vs {weights} weights")]
    LengthMismatch { points: usize, weights: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("support mismatch: displacement has {displacement} vectors, measure has {measure} points")]
    SupportMismatch { displacement: usize, measure: usize },
    #[error("non-finite state at step {step} (integration blow-up)")]
    IntegrationBlowUp { step: usize },
    #[error("field is not uniformly monotone: sampled <Bz,z> = {found} > -k|z|^2 = {required}")]
    NotMonotone { found: f64, required: f64 },
    #[error("unknown scenario {name:?} (expected \"example1\" or \"example2\")")]
    UnknownScenario { name: String },
    #[error("unknown analytic reference {name:?} for scenario {scenario:?}")]
    UnknownReference { name: String, scenario: String },
    #[error("transport solver failed to converge: {reason}")]
    SolverStalled { reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed measure file: {reason}")]
    MalformedMeasureFile { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
