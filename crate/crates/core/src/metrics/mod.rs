//! Colour conversions and image quality metrics.

mod color;
mod quality;
mod report;

pub use color::{hsv_saturation, saturation_pixel, srgb_to_lab, srgb_to_lab_jacobian, srgb_to_lab_pixel};
pub(crate) use quality::uciqe_eval;
pub use quality::{
    gaussian_window, psnr, ssim, uciqe, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW, UCIQE_C1, UCIQE_C2, UCIQE_C3,
};
pub use report::{MetricReport, MetricRow};
