//! Blind separation of acoustic mixtures by binary time-frequency masking.
//!
//! Two routes share the same masking back end: a classical one that clusters
//! inter-channel magnitude/phase features, and a learned one that clusters
//! per-bin embeddings from a recurrent network trained with an affinity loss.

// Negated comparisons reject NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod embednet;
pub mod error;
pub mod experiments;
pub mod features;
pub mod masking;
pub mod metrics;
pub mod pipeline;
pub mod signals;
pub mod tfr;
pub mod training;

pub use error::{Error, Result};
