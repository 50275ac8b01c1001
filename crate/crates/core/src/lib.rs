//! Pixel context encoder (PCE) for image inpainting and extrapolation.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: a rank-4 tensor and the forward/backward kernels for every
//!   layer primitive the network uses (convolution, ELU, LeakyReLU, batch
//!   normalisation, nearest-neighbour upsampling, masked elementwise ops).
//! - [`model`]: the dilated-convolution generator and the PatchGAN
//!   discriminator, plus receptive-field and parameter-count analysis.
//! - [`loss`]: masked L1, adversarial losses and the weighted objective.
//! - [`data`]: image codecs, resize/crop, masks, corruption and metrics.
//! - [`trainer`]: Adam, the alternating update loop, checkpoints, evaluation.
//! - [`gradcheck`]: finite-difference verification of every backward kernel.
//! - [`cli`]: the `pce` command-line front end.

pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod tensor;
pub mod trainer;

pub use error::{PceError, Result};
pub use tensor::{Scalar, Tensor4};
