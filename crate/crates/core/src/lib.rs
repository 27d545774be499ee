//! Model selection for single-hidden-layer classifier networks.
//!
//! An oversized sigmoid/softmax network is trained for a few epochs, its
//! hidden neurons are scored by EFAST total-effect sensitivity and by the
//! Pearson correlation of their activations, and a binary ant colony
//! optimizer searches for the neuron subset with the lowest validation
//! cross-entropy. The network is pruned to that subset and the cycle repeats
//! until the colony can no longer shrink the hidden layer.
//!
//! The modules map onto the stages of that loop:
//!
//! - [`dataset`]: CSV ingestion, seeded 50/25/25 splits, z-score normalization
//! - [`network`]: the classifier, SGD training, masking and pruning
//! - [`sensitivity`]: EFAST total effects and neuron contribution percentages
//! - [`correlation`]: Pearson correlation between hidden activations
//! - [`baco`]: heuristics, solution construction and pheromone dynamics
//! - [`selector`]: the outer train / analyze / select / prune loop

pub mod baco;
pub mod correlation;
pub mod dataset;
mod error;
pub mod network;
pub mod seed;
pub mod selector;
pub mod sensitivity;

pub use error::{Error, Result};
