//! Distributed learning around a central parameter server.
//!
//! * [`coordinator`]: the swap server, contact schedules, the simulation
//!   engine, a TCP transport, and one-shot least squares from shard
//!   second-order statistics.
//! * [`learners`]: local objectives, proximal gradient updates and the
//!   centralized reference optimizers.
//! * [`gp`]: exact Gaussian-process experts per shard and committee rules
//!   (PoE, gPoE, BCM, gBCM).
//! * [`clustering`]: k-means under ℓ2/ℓ∞, k-windows with weighted ℓ∞ boxes,
//!   k-d tree range search and the naive distributed k-windows merge.
//! * [`data`]: generators, CSV I/O and partitioning into node shards.
//! * [`experiment`]: configured, reproducible runs with metrics output.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod clustering;
pub mod coordinator;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod learners;
pub mod linalg;

pub use error::{Error, Result};
