//! Dense-network numerical kernel with hand-derived gradients.

mod adam;
mod dense;
pub mod gradcheck;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::{Activation, DenseLayer, LayerGrads};
pub use gradcheck::finite_diff_grad;
