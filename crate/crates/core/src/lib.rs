//! Explicit transformer constructions for exact arithmetic and for regression
//! on low-dimensional manifolds.
//!
//! The crate builds ReLU-attention transformers weight by weight: interaction
//! heads that couple one token pair, feed-forward gates and decrements,
//! arithmetic programs assembled from them, and finally a regressor that
//! reproduces a partition-of-unity approximation of a Hölder function on a
//! tubular neighbourhood of a manifold. Analytic manifolds, δ-nets, the oracle
//! partition and the empirical rate harness live alongside so every
//! construction can be checked against an independent reference.

pub mod analysis_harness;
pub mod approximator_synthesis;
pub mod error;
pub mod manifold_geometry;
pub mod oracle_partition;
pub mod transformer_core;
pub mod weight_compiler;

pub use error::{Error, Result};
pub use transformer_core::{
    embed_input, AttentionHead, EmbeddingMatrix, FeedForward, Layer, TransformerBlock, TransformerNetwork, D_EMBED,
};
