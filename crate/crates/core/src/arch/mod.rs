//! The restoration network and its modules.

mod config;
mod modules;
mod network;
mod params;

pub(crate) use config::parse_value;
pub use config::NetworkConfig;
pub use modules::{fft_macs, Conv, ConvBlock, Csc, Fdpa, Hda, Lka, Module, Sdca, RESIDUAL_INIT_SCALE};
pub use network::{count_params_macs, Cost, Level, Network, Stage};
pub use params::{Bound, ParameterStore};

#[cfg(test)]
mod tests;
