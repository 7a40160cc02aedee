//! Energy accounting for contrastive representation learning.
//!
//! The crate is organised around the four things one needs to compare the
//! total cost of supervised, self-supervised and semi-supervised training:
//!
//! - [`power_meter`]: sample CPU/GPU/RAM power and integrate it into joules.
//! - [`cost_model`]: labeling energy, total energy, break-even labeling time
//!   and Pareto analysis over regime records.
//! - [`contrastive`]: InfoNCE and SupCon objectives with analytic gradients,
//!   plus a confidence-threshold pseudo-labeling mode.
//! - [`knn`]: similarity-weighted kNN accuracy of learned embeddings.
//! - [`harness`]: synthetic datasets and instrumented desk-scale training.
//!
//! The `book/` directory at the repository root walks through each of these
//! with runnable snippets; those snippets are compiled and run as doc-tests
//! of this crate.

pub mod contrastive;
pub mod cost_model;
pub mod error;
pub mod harness;
pub mod knn;
pub mod power_meter;

pub use error::{Error, Result};

/// Joules per kilowatt-hour.
pub const JOULES_PER_KWH: f64 = 3.6e6;

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/metering.md")]
    pub mod metering {}
    #[doc = include_str!("../../../book/src/labeling.md")]
    pub mod labeling {}
    #[doc = include_str!("../../../book/src/losses.md")]
    pub mod losses {}
    #[doc = include_str!("../../../book/src/knn.md")]
    pub mod knn {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
}
