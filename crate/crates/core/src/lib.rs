//! Sliced inverse regression (SIR) for sufficient dimension reduction.
//!
//! - [`linalg`]: symmetric eigendecomposition, whitening, subspace loss.
//! - [`slicing`]: slicing by response order and the candidate matrix `Λ̂_H`.
//! - [`sir`]: the SIR estimator and gSNR estimate.
//! - [`sparse`]: aggregation and oracle estimators for sparse bases.
//! - [`models`]: the simulation models and lower-bound construction.
//! - [`analysis`]: conditional-mean covariances, entropy, decay bounds.
//! - [`experiment`]: the seeded, parallel experiment harness behind the CLI.

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod models;
pub mod sir;
pub mod slicing;
pub mod sparse;
pub mod stats;

pub use error::{Result, SirError};
pub use linalg::{general_loss, Basis, SymMatrix};
pub use sir::{fit_sir, SigmaMode, SirConfig, SirFit};
pub use slicing::Dataset;
