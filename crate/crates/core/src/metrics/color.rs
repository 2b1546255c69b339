//! sRGB to CIELab (D65) and HSV saturation, per pixel and per image.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

/// D65 reference white as the image of sRGB white under [`SRGB_TO_XYZ`].
const WHITE: [f64; 3] = [
    SRGB_TO_XYZ[0][0] + SRGB_TO_XYZ[0][1] + SRGB_TO_XYZ[0][2],
    SRGB_TO_XYZ[1][0] + SRGB_TO_XYZ[1][1] + SRGB_TO_XYZ[1][2],
    SRGB_TO_XYZ[2][0] + SRGB_TO_XYZ[2][1] + SRGB_TO_XYZ[2][2],
];

const DELTA: f64 = 6.0 / 29.0;

/// Gamma expansion and its derivative.
fn linearize(v: f64) -> (f64, f64) {
    if v <= 0.040_45 {
        (v / 12.92, 1.0 / 12.92)
    } else {
        let base = (v + 0.055) / 1.055;
        (base.powf(2.4), 2.4 / 1.055 * base.powf(1.4))
    }
}

fn lab_f(t: f64) -> (f64, f64) {
    if t > DELTA * DELTA * DELTA {
        let c = t.cbrt();
        (c, 1.0 / (3.0 * c * c))
    } else {
        let k = 1.0 / (3.0 * DELTA * DELTA);
        (t * k + 4.0 / 29.0, k)
    }
}

/// `[L, a, b]` for one sRGB pixel with components in `[0, 1]`.
pub fn srgb_to_lab_pixel(rgb: [f64; 3]) -> [f64; 3] {
    srgb_to_lab_jacobian(rgb).0
}

/// Lab value together with `∂[L, a, b] / ∂[r, g, b]` (row per output).
pub fn srgb_to_lab_jacobian(rgb: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let lin = rgb.map(linearize);
    let mut f = [0.0; 3];
    let mut df_drgb = [[0.0; 3]; 3];
    for i in 0..3 {
        let xyz: f64 = (0..3).map(|j| SRGB_TO_XYZ[i][j] * lin[j].0).sum();
        let (fv, fd) = lab_f(xyz / WHITE[i]);
        f[i] = fv;
        for j in 0..3 {
            df_drgb[i][j] = fd / WHITE[i] * SRGB_TO_XYZ[i][j] * lin[j].1;
        }
    }
    let lab = [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])];
    let d = &df_drgb;
    let jac = [
        std::array::from_fn(|j| 116.0 * d[1][j]),
        std::array::from_fn(|j| 500.0 * (d[0][j] - d[1][j])),
        std::array::from_fn(|j| 200.0 * (d[1][j] - d[2][j])),
    ];
    (lab, jac)
}

/// HSV saturation `(max - min) / max`, zero for black.
pub fn saturation_pixel(rgb: [f64; 3]) -> f64 {
    let mx = rgb[0].max(rgb[1]).max(rgb[2]);
    let mn = rgb[0].min(rgb[1]).min(rgb[2]);
    if mx <= 0.0 {
        0.0
    } else {
        (mx - mn) / mx
    }
}

/// `∂s / ∂[r, g, b]`. Ties resolve to the first channel.
pub(crate) fn saturation_grad(rgb: [f64; 3]) -> [f64; 3] {
    let (mut imax, mut imin) = (0, 0);
    for k in 1..3 {
        if rgb[k] > rgb[imax] {
            imax = k;
        }
        if rgb[k] < rgb[imin] {
            imin = k;
        }
    }
    let (mx, mn) = (rgb[imax], rgb[imin]);
    let mut g = [0.0; 3];
    if mx <= 0.0 || imax == imin {
        return g;
    }
    g[imax] += mn / (mx * mx);
    g[imin] -= 1.0 / mx;
    g
}

pub(crate) fn check_rgb<T: Real>(x: &Tensor<T>, op: &str) -> Result<()> {
    if x.shape().c() != 3 {
        return Err(Error::InvalidShape(format!(
            "{op} expects 3 channels, got {}",
            x.shape()
        )));
    }
    Ok(())
}

/// Pixels of image `n` as `[r, g, b]` in f64, clamped to `[0, 1]`.
pub(crate) fn pixels<T: Real>(x: &Tensor<T>, n: usize) -> Vec<[f64; 3]> {
    let (r, g, b) = (x.plane(n, 0), x.plane(n, 1), x.plane(n, 2));
    (0..r.len())
        .map(|i| [r[i], g[i], b[i]].map(|v| v.to_f64_lossy().clamp(0.0, 1.0)))
        .collect()
}

/// Convert every pixel of an `N×3×H×W` sRGB image to `[L, a, b]` planes.
pub fn srgb_to_lab<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    check_rgb(x, "srgb_to_lab")?;
    let s = x.shape();
    let mut out = Tensor::zeros(s);
    let p = s.plane();
    for n in 0..s.n() {
        for (i, px) in pixels(x, n).into_iter().enumerate() {
            let lab = srgb_to_lab_pixel(px);
            for (k, v) in lab.into_iter().enumerate() {
                out.data_mut()[(n * 3 + k) * p + i] = T::from_f64_lossy(v);
            }
        }
    }
    Ok(out)
}

/// Per-pixel HSV saturation as an `N×1×H×W` tensor.
pub fn hsv_saturation<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    check_rgb(x, "hsv_saturation")?;
    let s = x.shape();
    let mut data = Vec::with_capacity(s.n() * s.plane());
    for n in 0..s.n() {
        data.extend(
            pixels(x, n)
                .into_iter()
                .map(|px| T::from_f64_lossy(saturation_pixel(px))),
        );
    }
    Tensor::from_vec(s.with_channels(1), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        assert_eq!(srgb_to_lab_pixel([0.0; 3]), [0.0, 0.0, 0.0]);
        let w = srgb_to_lab_pixel([1.0; 3]);
        assert!((w[0] - 100.0).abs() < 1e-9 && w[1].abs() < 0.01 && w[2].abs() < 0.01);
        let g = srgb_to_lab_pixel([0.5; 3]);
        assert!((g[0] - 53.39).abs() < 0.01, "{g:?}");
        assert!(g[1].abs() < 0.01 && g[2].abs() < 0.01);
    }

    #[test]
    fn jacobian_matches_differences() {
        for rgb in [[0.2, 0.5, 0.9], [0.01, 0.03, 0.02], [0.7, 0.1, 0.4]] {
            let (_, jac) = srgb_to_lab_jacobian(rgb);
            for j in 0..3 {
                let h = 1e-6;
                let mut up = rgb;
                let mut dn = rgb;
                up[j] += h;
                dn[j] -= h;
                let (a, b) = (srgb_to_lab_pixel(up), srgb_to_lab_pixel(dn));
                for o in 0..3 {
                    let fd = (a[o] - b[o]) / (2.0 * h);
                    assert!(
                        (fd - jac[o][j]).abs() < 1e-5 * (1.0 + fd.abs()),
                        "d{o}/d{j}: {fd} vs {}",
                        jac[o][j]
                    );
                }
            }
        }
    }

    #[test]
    fn saturation_examples() {
        assert_eq!(saturation_pixel([1.0, 0.0, 0.0]), 1.0);
        assert_eq!(saturation_pixel([0.3; 3]), 0.0);
        assert_eq!(saturation_pixel([0.0; 3]), 0.0);
        assert!((saturation_pixel([0.8, 0.4, 0.6]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gray_lightness_is_monotone() {
        let ls: Vec<f64> = (0..=100).map(|i| srgb_to_lab_pixel([i as f64 / 100.0; 3])[0]).collect();
        assert!(ls.windows(2).all(|w| w[0] < w[1]));
    }
}
