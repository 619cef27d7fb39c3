//! k-space image quality transfer for accelerated low-field MRI.
//!
//! Undersampled low-field k-space is packed into real/imaginary channels and
//! mapped to high-field-like k-space by a three-level U-Net. The crate covers
//! the whole desk-scale pipeline: Fourier operators, sampling masks, synthetic
//! paired data, the differentiable network, training and evaluation.

pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod kspace;
pub mod lfsim;
mod par;
pub mod pipeline;
pub mod sampling;
pub mod tensor;
pub mod training;
pub mod unet;

pub use error::{Error, Result};
