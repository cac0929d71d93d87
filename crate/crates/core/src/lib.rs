//! Simulation and analysis of Gibbs facet processes.
//!
//! A facet is an axis-aligned (d−1)-dimensional box of side `2b` centred in
//! the window `[0,b]^d` and normal to one coordinate axis. This crate
//! simulates Poisson and Gibbs processes of such facets, computes the
//! intersection U-statistics `G_1..G_d`, evaluates the exact orientation-count
//! distribution of the full-dimensional submodel together with its
//! concentration behaviour, bounds and estimates correlation functions, and
//! verifies the limit behaviour (central limit theorems, moment convergence,
//! mean decay) by seeded Monte Carlo experiments.
//!
//! Module map:
//! - [`geometry`]: facets, patterns, exact intersection measures.
//! - [`model`]: the reference measure, Poisson sampling, Gibbs densities and
//!   conditional intensities.
//! - [`ustats`]: U-statistics, orientation counts, reduced kernels,
//!   standardization.
//! - [`mcmc`]: birth-death-move Metropolis-Hastings sampling of the Gibbs
//!   process.
//! - [`analytic`]: exact series (orientation-count law, B-sums, correlation
//!   bounds and limits) and asymptotic covariances.
//! - [`partitions`]: compatible set partitions and joint-moment formulas.
//! - [`verify`]: statistical experiment harness with pass/fail reports.
//! - [`stats`]: shared statistical utilities (ESS, KS test, chi-square,
//!   log-sum-exp).
//! - [`seeding`]: the deterministic per-task RNG derivation contract.

pub mod analytic;
pub mod geometry;
pub mod mcmc;
pub mod model;
pub mod partitions;
pub mod seeding;
pub mod stats;
pub mod ustats;
pub mod verify;

pub use geometry::{Facet, FacetPattern};
pub use model::{BaseMeasure, Chi, ModelConfig, SubmodelSpec};
pub use ustats::{OrientationCounts, UStatVector};

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value violates a documented precondition.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// An operation argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A combinatorial enumeration exceeded its size guard.
    #[error("enumeration guard exceeded: {0}")]
    EnumerationGuard(String),
    /// A statistical run could not produce a meaningful result.
    #[error("diagnostic failure: {0}")]
    Diagnostic(String),
}

pub type Result<T> = std::result::Result<T, Error>;
