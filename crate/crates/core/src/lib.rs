//! Image bit-depth expansion.
//!
//! Integer baselines (zero padding and ideal gain), a small reverse-mode
//! tensor engine, and an attentive GAN de-quantizer built on it: dense
//! residual blocks with self-attention in a U-net generator, a convolutional
//! discriminator, composite content/adversarial losses, training, and
//! PSNR/SSIM evaluation.

pub mod autograd;
pub mod bench;
pub mod bitdepth;
pub mod error;
pub mod gradcheck;
pub mod imageio;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod parallel;
pub mod params;
pub mod reference;
pub mod rng;
pub mod selfcheck;
pub mod tensor;
pub mod training;

pub use autograd::{Activation, Gradients, Graph, Var};
pub use bitdepth::ImageBuffer;
pub use error::{Error, ErrorClass, Result};
pub use params::ParamStore;
pub use rng::Rng;
pub use tensor::{Scalar, Tensor};
