//! Gibbs and collapsed Gibbs sampling for Gaussian crossed random effects
//! models, together with exact convergence-rate analysis of both samplers.
//!
//! The model relates a response observed on the cells of a `K`-way
//! contingency table to additive factor effects,
//!
//! ```text
//! y[i1..iK] ~ N(a0 + a1[i1] + ... + aK[iK], 1 / (n[i1..iK] * tau0))
//! ak[j]     ~ N(0, 1 / tauk),   p(a0) ∝ 1
//! ```
//!
//! Modules:
//! - [`model`]: observations, the sparse incidence table and its margins.
//! - [`samplers`]: full conditionals, sweeps, precision updates, parameter
//!   expansion and the chain driver.
//! - [`spectral`]: autoregressive mean map, numeric rates by dense eigensolve,
//!   block power iteration or Krylov-Schur, the auxiliary level walk, closed-form
//!   predictions.
//! - [`diagnostics`]: autocorrelation, effective sample size,
//!   cross-correlation.
//! - [`datagen`]: synthetic designs.
//! - [`bench`]: per-sweep timing and log-log cost fits.

pub mod bench;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod samplers;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{DesignClass, IncidenceTable, Observation, Precisions};
pub use samplers::{Chain, ModelState, SamplerConfig, Scheme, SweepKind};
pub use spectral::{RateReport, TheoryKind};
