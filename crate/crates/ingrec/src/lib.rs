//! Multi-label food ingredient recognition toolkit.
//!
//! The crate bundles a small trainable CNN core with exact backpropagation
//! (`tensor`, `layers`, `network`), the sigmoid + binary cross-entropy
//! multi-label head and its softmax counterpart (`losses`), example-based
//! precision/recall/F1 evaluation with a random-subset baseline (`metrics`),
//! an ingredient vocabulary pipeline with particle-removal simplification
//! (`vocab`), corpus loaders plus a deterministic synthetic shape-salad
//! generator (`data`), mini-batch training, transfer and checkpointing
//! (`train`), and neuron-activation inspection (`inspect`).

pub mod data;
pub mod error;
pub mod inspect;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
pub use tensor::Tensor;
