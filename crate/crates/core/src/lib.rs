//! Two-sample hypothesis testing for right-censored survival data.
//!
//! The crate bundles three layers that build on each other:
//!
//! 1. **Statistical core** — parametric lifetime distributions ([`dist`]),
//!    nonparametric estimators ([`survival`]) and a family of thirteen
//!    classical two-sample tests ([`classical`]), including weighted
//!    log-rank variants, a weighted Kaplan-Meier integral test and the
//!    Bagdonavičius-Nikulin goodness-of-fit style tests.
//! 2. **Simulation engine** — a deterministic, parallel Monte-Carlo driver
//!    ([`simulation`]) over a registry of calibrated alternative pairs
//!    ([`alternatives`]), producing feature datasets and empirical null
//!    tables.
//! 3. **ML stacking** — a meta-test that feeds the classical statistics into
//!    a natively trained classifier (logistic regression or gradient-boosted
//!    trees, [`mlstack`]) and calibrates the classifier score against a
//!    simulated null, plus power/ranking/envelope reporting ([`analysis`]).
//!
//! Everything is deterministic given a seed: the same inputs produce
//! byte-identical outputs regardless of worker count.

pub mod alternatives;
pub mod analysis;
pub mod bins;
pub mod classical;
pub mod dist;
pub mod error;
pub mod io;
pub mod mlstack;
pub mod numeric;
pub mod rng;
pub mod simulation;
pub mod special;
pub mod survival;

pub use error::{Error, Result};

/// Version string stamped into every serialized artifact.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
