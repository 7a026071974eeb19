//! Minimal deterministic numerical kernel.
//!
//! Forward and backward operations for the tagger (1D convolution, dense
//! layers, cross-entropy, dropout, L1), the Adam optimizer, and a
//! finite-difference gradient checker. Everything is `f64` and free of
//! hidden state; all randomness comes in through explicit [`crate::rng::XRng`]
//! handles.

pub mod adam;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod loss;
mod matrix;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{conv1d, conv1d_backward, ConvGrads, ConvKernel};
pub use dense::{dense, dense_backward, softmax, softmax_backward, Activation};
pub use dropout::{apply_mask, dropout_mask};
pub use gradcheck::gradient_check;
pub use loss::{cross_entropy, cross_entropy_logit_grad, l1_penalty};
pub use matrix::Matrix;
