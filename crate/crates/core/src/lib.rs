//! Learned image codec with a hierarchical hyperprior, masked spatial context,
//! channel-conditioned latent slices with squeeze-and-excitation, latent
//! residual prediction and a bit-exact range coder.

pub mod coder;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod tensors;
pub mod training;

pub use error::{Error, Result};
pub use tensors::{Tensor, Var};
