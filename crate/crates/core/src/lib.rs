//! Adaptive SVD subspace partitioning for continual learning.
//!
//! Each layer's weight is split by SVD into a high-rank part that is frozen
//! and a low-rank part that keeps training; the split point per layer comes
//! from an importance score. Around that core sit small dense networks,
//! synthetic task streams, continual-learning metrics, exact-Hessian checks
//! of the forgetting bounds and weight-spectrum diagnostics.

pub mod continual;
pub mod error;
pub mod experiment;
pub mod importance;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod seeding;
pub mod spectrum;
pub mod subspace;
pub mod tasks;
pub mod theory;

pub use error::{Error, Result};
pub use linalg::{Matrix, SvdFactorization};
pub use network::Network;
pub use subspace::{RetentionConfig, SubspacePartition};
