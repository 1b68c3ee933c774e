//! Two-stage contrastive audio/text alignment for cross-lingual binary
//! classification.
//!
//! Stage 1 pre-trains two MLP encoders so that normalized audio and text
//! embeddings of same-label samples align on the unit hypersphere under a
//! masked contrastive loss. Stage 2 trains a sigmoid classifier over the
//! fused (concatenated) embeddings under a weighted combination of a
//! cross-language triplet loss and binary cross-entropy. Every backward pass
//! is hand-derived and verified against central finite differences; the
//! evaluation kit ships brute-force oracles for its AUC and EER metrics.
//!
//! Core dense math lives in [`tensor`] and is generic over the scalar type;
//! the pipeline works in `f64` through the aliases below.

pub mod config;
pub mod contrastive;
pub mod data;
pub mod downstream;
pub mod encoder;
pub mod evalkit;
pub mod gradcheck;
pub mod report;
pub mod tensor;
pub mod trainer;

/// Pipeline-wide matrix type: 64-bit floats everywhere, as the gradient
/// checks demand.
pub type Matrix = tensor::Mat<f64>;
/// Single-precision variant of the core matrix type.
pub type Matrix32 = tensor::Mat<f32>;

pub use tensor::{SeededRng, TensorError};
