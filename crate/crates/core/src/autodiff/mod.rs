//! Reverse-mode automatic differentiation.

pub mod gradcheck;
mod ops;
mod tape;

pub use ops::{gelu_scalar, sigmoid_scalar, BinaryOp};
pub use tape::{Gradients, Tape, Var};
