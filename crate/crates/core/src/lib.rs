//! Underwater image restoration with polymorphic large-kernel convolutions.
//!
//! The crate carries its own small numerical stack: NCHW tensors with a
//! reverse-mode tape, a convolution family, a mixed-radix 2-D FFT, colour
//! conversions and quality metrics, the restoration network itself, its
//! composite loss, and a training harness.

pub mod app;
pub mod arch;
pub mod autodiff;
pub mod error;
pub mod io;
mod linalg;
pub mod metrics;
pub mod nn;
pub mod objective;
pub mod parallel;
pub mod spectral;
pub mod tensor;
pub mod training;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use tensor::{Real, Shape, Tensor};
