//! Channel-level pruning and cascaded inference for small networks.
//!
//! The crate scores the output channels of one target layer, removes the
//! weakest channels by structural surgery while inheriting the surviving
//! weights, fine-tunes the narrowed network, and serves it in front of the
//! full network behind a confidence threshold.
//!
//! The channel utility at the centre of it all is the mean absolute
//! feature-space Taylor term `|Y_c ⊙ ∂L/∂Y_c|`, accumulated over a few
//! calibration batches ([`importance::calibrate_agf`]). Everything needed to
//! compare it against the usual alternatives (ℓ1, net Taylor, Wanda, RIA,
//! random) is included, down to a small reverse-mode differentiation engine.

pub mod error;
pub mod tensor;
pub mod autodiff;
pub mod network;
pub mod checkpoint;
pub mod data;
pub mod importance;
pub mod surgeon;
pub mod trainer;
pub mod router;
pub mod analysis;
pub mod report;
pub mod config;
pub mod pipeline;
pub mod demos;

pub use error::{Error, Result};
pub use tensor::Tensor;
