//! Dense variational autoencoders written from first principles, with the
//! diagnostics needed to study latent-variable sparsity: which coordinates
//! a trained VAE stops using, why, and what happens when one is degraded.
//!
//! Everything runs on `f64` with hand-derived gradients; there is no
//! autodiff tape. Training is single threaded and deterministic given a
//! seed. Evaluation passes may use a rayon pool (see [`parallel`]) and are
//! bit-identical for any thread count.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod nn;
pub mod parallel;
pub mod rng;
pub mod serialize;
pub mod tensor;
pub mod train;

pub use data::Dataset;
pub use error::{Error, Result};
pub use model::{Architecture, EncoderOutput, Objective, PenaltyMode, VaeModel};
pub use rng::Rng;
pub use tensor::Tensor;
pub use train::{train, TrainConfig, TrainLog};
