//! Skew-reflected squared Bessel and CIR processes on a deterministic
//! time-dependent curve.
//!
//! The process of interest solves
//!
//! ```text
//! R_t = R_0 + ∫ σ √R_s dW_s + ∫ (σ²/4)(δ − b R_s) ds + (2p−1) ℓ⁰_t(R − λ²)
//! ```
//!
//! where `λ²` is a continuous, locally bounded-variation curve and
//! `ℓ⁰(R − λ²)` is the symmetric semimartingale local time of `R − λ²`
//! at zero. For `p = 1/2` (or `λ² ≡ 0`) this is the classical CIR
//! process; for `σ = 2, b = 0` the squared Bessel process of dimension
//! `δ`.
//!
//! The crate provides:
//!
//! * [`model`]: validated parameters and curve representations with
//!   exact bounded-variation structure,
//! * [`special`]: Kummer `M` eigenfunctions of the generator, the
//!   harmonic barrier function and related test functions,
//! * [`criterion`]: analytic sufficient criteria for pathwise
//!   uniqueness (measure inequalities, PDE residuals, a generalized
//!   Gronwall bound),
//! * [`engine`]: a seeded, parallel Euler scheme with skew reflection
//!   and running local-time ledgers,
//! * [`lab`]: Monte Carlo experiments that verify the analytic
//!   identities on simulated paths.

pub mod model;
pub mod special;
pub mod criterion;
pub mod engine;
pub mod lab;
pub mod report;

mod book;

pub use model::{Curve, ModelParams, SignedMeasureSummary};
