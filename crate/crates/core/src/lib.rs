//! Confidence-guided registration of partial 3D point clouds.
//!
//! The pipeline embeds both clouds with a hierarchical EdgeConv network over
//! rotation-invariant descriptors, builds a soft correspondence matrix from
//! cosine similarity of the embeddings, samples small correspondence groups
//! according to a per-point confidence distribution, solves a rigid transform
//! per group, and keeps the candidate with the lowest confidence guided
//! distance (a Chamfer distance whose terms are weighted by latent similarity).
//!
//! Module map:
//! - [`geometry`]: point clouds, rigid transforms, kNN, FPS, Kabsch, metrics.
//! - [`distances`]: filtered Chamfer distance and the confidence guided distance.
//! - [`embedder`]: rotation-invariant features, the network and its reverse pass.
//! - [`losses`]: repulsion, similarity and contrastive training losses.
//! - [`consensus`]: correspondence, confidence sampling and candidate selection.
//! - [`harness`]: synthetic data, training, evaluation, ICP, config and file I/O.

pub mod consensus;
pub mod distances;
pub mod embedder;
mod error;
pub mod geometry;
pub mod harness;
pub mod losses;
pub mod mat;

pub use error::{Error, Result};
