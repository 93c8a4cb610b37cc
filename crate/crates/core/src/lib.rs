//! Entropy Loss: layer-wise differential entropy regularization.
//!
//! The crate estimates the differential entropy of each hidden layer's
//! activations with nearest-neighbor estimators, turns the per-layer entropy
//! deltas into a variance loss and a direction loss, and trains a small
//! repeated-width network on the task loss plus that regularizer. The
//! [`analysis`] module holds the curve and feature-space analytics used to
//! compare runs, and [`harness`] drives experiments from the command line.
//!
//! Data-parallel loops (neighbor queries, per-layer estimates, seed sweeps)
//! use rayon when the default `parallel` feature is on.

pub mod analysis;
pub mod entropy;
pub mod error;
pub mod exec;
pub mod harness;
pub mod loss;
pub mod matrix;
pub mod neighbor_search;
pub mod network;

pub use entropy::{
    digamma, entropy_knn, entropy_knn_gradient, entropy_nn, layer_deltas, unit_ball_volume,
    DuplicatePolicy, EntropyEstimate, EntropyProfile, EULER_GAMMA,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use loss::{
    combined_entropy_loss, direction_loss, entropy_loss_gradients, variance_loss,
    EntropyLossConfig, EntropyLossValue, SampleConvention,
};
pub use matrix::SampleMatrix;
pub use neighbor_search::{brute_force_knn, knn_distances, NeighborDistances};
