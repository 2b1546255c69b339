//! Differentiable convolution family and supporting layers.

mod conv;
mod layers;

pub use conv::{conv2d_backward, conv2d_forward, conv2d_reference, ConvSpec, Padding};
pub use layers::{
    depth_to_space, downsample_spec, init_weights, space_to_depth, upsample_spec, Activation, WeightBundle,
};
