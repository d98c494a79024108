//! Contribution-aware multimodal user embedding.
//!
//! A graph encoder and a text encoder each embed every user; a small
//! attention gate looks at the user's summed adjacency row and raw text
//! embedding and emits a convex pair `(alpha, beta)` that weights the two
//! embeddings before a linear classifier. The learned pair is the per-user
//! contribution map.

pub mod data;
pub mod encoders;
pub mod error;
pub mod fusion;
pub mod graph;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
