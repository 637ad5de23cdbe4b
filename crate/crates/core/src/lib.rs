//! Subject-level differential privacy for federated learning.
//!
//! A *subject* is an individual whose data items may be spread over several
//! federation users. This crate simulates a federation on a single machine
//! and trains small differentiable models so that the presence or absence of
//! any one subject is hidden, using three local training procedures:
//!
//! * **LocalGroupDP**: per-item clipping with noise calibrated to the largest
//!   per-subject group observed in each minibatch (group privacy).
//! * **HiGradAvgDP**: per-item clipping followed by per-subject averaging, so
//!   every subject contributes at most one clipped gradient's worth of signal.
//! * **UserLDP**: whole-minibatch clipping with user-level local noise.
//!
//! Item-level DP-SGD (`LocalItemDp`) and plain federated averaging are
//! provided as baselines.
//!
//! Module map:
//!
//! * [`data`]: subjects, items, datasets, partitioning across users, minibatches.
//! * [`accountant`]: Rényi accounting, noise solvers, group conversions,
//!   horizontal-composition planning and utility-bound calculators.
//! * [`models`]: logistic regression and a one-hidden-layer MLP with analytic
//!   per-example gradients, clipping and checkpoints.
//! * [`trainers`]: the five local training procedures and their batch audits.
//! * [`federation`]: server loop, user sampling, federated averaging.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod data;
mod error;
pub mod federation;
pub mod models;
pub mod rng;
pub mod trainers;

pub use error::{Error, Result};
