//! Full-reference (PSNR, SSIM) and no-reference (UCIQE) image quality.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::{lit, Real, Shape, Tensor};

use super::color::{check_rgb, pixels, saturation_grad, saturation_pixel, srgb_to_lab_jacobian};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 1e-4;
pub const SSIM_C2: f64 = 9e-4;

pub const UCIQE_C1: f64 = 0.4680;
pub const UCIQE_C2: f64 = 0.2745;
pub const UCIQE_C3: f64 = 0.2576;

fn same_shape<T: Real>(op: &'static str, x: &Tensor<T>, y: &Tensor<T>) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: x.shape(),
            rhs: y.shape(),
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB for unit peak. Identical inputs give
/// `f64::INFINITY`.
pub fn psnr<T: Real>(x: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    same_shape("psnr", x, y)?;
    let sq: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| (a.to_f64_lossy() - b.to_f64_lossy()).powi(2))
        .sum();
    let mse = sq / x.numel() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let mid = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - mid).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable valid correlation of every plane with `taps ⊗ taps`.
fn filter_valid<T: Real>(x: &Tensor<T>, taps: &[T]) -> Tensor<T> {
    let s = x.shape();
    let k = taps.len();
    let (h, w) = (s.h(), s.w());
    let (ho, wo) = (h + 1 - k, w + 1 - k);
    let out_shape = Shape::new(s.n(), s.c(), ho, wo);
    let mut out = vec![T::zero(); out_shape.numel()];
    parallel::for_each_chunk(&mut out, ho * wo, |idx, dst| {
        let src = &x.data()[idx * h * w..][..h * w];
        let mut rows = vec![T::zero(); h * wo];
        for y in 0..h {
            for xo in 0..wo {
                let seg = &src[y * w + xo..][..k];
                rows[y * wo + xo] = seg.iter().zip(taps).fold(T::zero(), |a, (&v, &t)| a + v * t);
            }
        }
        for yo in 0..ho {
            for (i, &t) in taps.iter().enumerate() {
                let row = &rows[(yo + i) * wo..][..wo];
                for (d, &v) in dst[yo * wo..][..wo].iter_mut().zip(row) {
                    *d += v * t;
                }
            }
        }
    });
    Tensor::from_vec(out_shape, out).expect("filtered shape")
}

/// Adjoint of [`filter_valid`]: scatter `g` back onto the input grid.
fn filter_valid_adjoint<T: Real>(g: &Tensor<T>, taps: &[T], input: Shape) -> Tensor<T> {
    let k = taps.len();
    let (h, w) = (input.h(), input.w());
    let (ho, wo) = (g.shape().h(), g.shape().w());
    let mut out = vec![T::zero(); input.numel()];
    parallel::for_each_chunk(&mut out, h * w, |idx, dst| {
        let src = &g.data()[idx * ho * wo..][..ho * wo];
        let mut rows = vec![T::zero(); h * wo];
        for yo in 0..ho {
            for (i, &t) in taps.iter().enumerate() {
                let row = &mut rows[(yo + i) * wo..][..wo];
                for (r, &v) in row.iter_mut().zip(&src[yo * wo..][..wo]) {
                    *r += v * t;
                }
            }
        }
        for y in 0..h {
            for xo in 0..wo {
                let v = rows[y * wo + xo];
                for (d, &t) in dst[y * w + xo..][..k].iter_mut().zip(taps) {
                    *d += v * t;
                }
            }
        }
    });
    Tensor::from_vec(input, out).expect("input shape")
}

impl<T: Real> Tape<T> {
    /// Valid-mode Gaussian smoothing of each plane with an 11×11, σ = 1.5
    /// window.
    pub fn gaussian_filter(&self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.h() < SSIM_WINDOW || s.w() < SSIM_WINDOW {
            return Err(Error::ImageTooSmall {
                h: s.h(),
                w: s.w(),
                min: SSIM_WINDOW,
            });
        }
        let taps: Vec<T> = gaussian_window(SSIM_WINDOW, SSIM_SIGMA).into_iter().map(lit).collect();
        let value = filter_valid(&self.value(x), &taps);
        Ok(self.push("gaussian_filter", value, &[x], move |g, _, _| {
            vec![Some(filter_valid_adjoint(g, &taps, s))]
        }))
    }

    /// Mean SSIM over all images, channels and window positions.
    pub fn ssim(&self, x: Var, y: Var) -> Result<Var> {
        let (sx, sy) = (self.shape(x), self.shape(y));
        if sx != sy {
            return Err(Error::ShapeMismatch {
                op: "ssim",
                lhs: sx,
                rhs: sy,
            });
        }
        let mu_x = self.gaussian_filter(x)?;
        let mu_y = self.gaussian_filter(y)?;
        let xx = self.square(x);
        let yy = self.square(y);
        let xy = self.mul(x, y)?;
        let mu_xx = self.square(mu_x);
        let mu_yy = self.square(mu_y);
        let mu_xy = self.mul(mu_x, mu_y)?;
        let s_xx = self.gaussian_filter(xx)?;
        let s_xx = self.sub(s_xx, mu_xx)?;
        let s_yy = self.gaussian_filter(yy)?;
        let s_yy = self.sub(s_yy, mu_yy)?;
        let s_xy = self.gaussian_filter(xy)?;
        let s_xy = self.sub(s_xy, mu_xy)?;

        let c1 = lit::<T>(SSIM_C1);
        let c2 = lit::<T>(SSIM_C2);
        let two = lit::<T>(2.0);
        let num_l = self.add_scalar(self.scale(mu_xy, two), c1);
        let num_c = self.add_scalar(self.scale(s_xy, two), c2);
        let den_l = self.add_scalar(self.add(mu_xx, mu_yy)?, c1);
        let den_c = self.add_scalar(self.add(s_xx, s_yy)?, c2);
        let num = self.mul(num_l, num_c)?;
        let den = self.mul(den_l, den_c)?;
        let map = self.div(num, den)?;
        Ok(self.mean_all(map))
    }
}

/// Single-scale SSIM, evaluated in double precision.
pub fn ssim<T: Real>(x: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    same_shape("ssim", x, y)?;
    let tape = Tape::<f64>::new();
    let a = tape.constant(x.cast());
    let b = tape.constant(y.cast());
    let v = tape.ssim(a, b)?;
    Ok(tape.item(v))
}

/// UCIQE of one image and its gradient w.r.t. the clamped RGB values.
pub(crate) struct UciqeEval {
    pub value: f64,
    pub grad: Option<Vec<[f64; 3]>>,
}

/// Evaluate UCIQE on image `n` of `x`. Pixels are clamped to `[0, 1]`.
///
/// The gradient treats the top and bottom lightness percentile sets as
/// fixed and is zero at non-differentiable points (zero chroma, zero spread,
/// black pixels).
pub(crate) fn uciqe_eval<T: Real>(x: &Tensor<T>, n: usize, with_grad: bool) -> UciqeEval {
    let px = pixels(x, n);
    let count = px.len();
    let labs: Vec<_> = px.iter().map(|&p| srgb_to_lab_jacobian(p)).collect();
    // chroma on the same 1/100 scale as lightness
    let chroma: Vec<f64> = labs.iter().map(|(l, _)| l[1].hypot(l[2]) / 100.0).collect();

    // population std on data shifted by the first element
    let k0 = chroma[0];
    let (s1, s2) = chroma
        .iter()
        .fold((0.0, 0.0), |(a, b), &c| (a + (c - k0), b + (c - k0) * (c - k0)));
    let nf = count as f64;
    let var = ((s2 - s1 * s1 / nf) / nf).max(0.0);
    let sigma = var.sqrt();
    let mean_c = k0 + s1 / nf;

    let tail = ((0.01 * nf).floor() as usize).max(1);
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&i, &j| labs[i].0[0].total_cmp(&labs[j].0[0]).then(i.cmp(&j)));
    let (low, high) = (&order[..tail], &order[count - tail..]);
    let mean_l = |idx: &[usize]| idx.iter().map(|&i| labs[i].0[0]).sum::<f64>() / tail as f64;
    let contrast = (mean_l(high) - mean_l(low)) / 100.0;

    let sat = px.iter().map(|&p| saturation_pixel(p)).sum::<f64>() / nf;
    let value = UCIQE_C1 * sigma + UCIQE_C2 * contrast + UCIQE_C3 * sat;

    let grad = with_grad.then(|| {
        // d value / d [L, a, b] per pixel, then chain through the Jacobian
        let mut d_lab = vec![[0.0f64; 3]; count];
        if sigma > 0.0 {
            for (i, (lab, _)) in labs.iter().enumerate() {
                let c = chroma[i];
                if c > 0.0 {
                    let dc = UCIQE_C1 * (c - mean_c) / (nf * sigma);
                    d_lab[i][1] += dc * lab[1] / (1e4 * c);
                    d_lab[i][2] += dc * lab[2] / (1e4 * c);
                }
            }
        }
        let dl = UCIQE_C2 / (100.0 * tail as f64);
        for &i in high {
            d_lab[i][0] += dl;
        }
        for &i in low {
            d_lab[i][0] -= dl;
        }
        (0..count)
            .map(|i| {
                let jac = &labs[i].1;
                let ds = saturation_grad(px[i]);
                std::array::from_fn(|j| (0..3).map(|o| d_lab[i][o] * jac[o][j]).sum::<f64>() + UCIQE_C3 * ds[j] / nf)
            })
            .collect()
    });

    UciqeEval { value, grad }
}

/// Underwater colour image quality of a single `1×3×H×W` image.
pub fn uciqe<T: Real>(x: &Tensor<T>) -> Result<f64> {
    check_rgb(x, "uciqe")?;
    if x.shape().n() != 1 {
        return Err(Error::InvalidShape(format!(
            "uciqe expects one image, got {}",
            x.shape()
        )));
    }
    Ok(uciqe_eval(x, 0, false).value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_image(shape: [usize; 4], seed: u64) -> Tensor<f64> {
        let mut s = seed;
        Tensor::from_fn(shape, |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn psnr_examples() {
        let x = rand_image([1, 3, 8, 8], 1).map(|v| v * 0.5);
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
        assert!((psnr(&x, &x.map(|v| v + 0.1)).unwrap() - 20.0).abs() < 1e-9);
        assert!((psnr(&x, &x.map(|v| v + 0.01)).unwrap() - 40.0).abs() < 1e-9);
        let y = rand_image([1, 3, 8, 8], 2);
        assert_eq!(psnr(&x, &y).unwrap(), psnr(&y, &x).unwrap());
        assert!(psnr(&x, &Tensor::zeros([1, 3, 8, 9])).is_err());
    }

    #[test]
    fn ssim_examples() {
        let x = rand_image([1, 3, 16, 16], 3);
        let y = rand_image([1, 3, 16, 16], 4);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        assert_eq!(ssim(&x, &y).unwrap(), ssim(&y, &x).unwrap());
        assert!(ssim(&x, &y).unwrap().abs() <= 1.0);
        let a = Tensor::<f64>::full([1, 3, 16, 16], 0.25);
        let b = Tensor::<f64>::full([1, 3, 16, 16], 0.75);
        let expect = (2.0 * 0.25 * 0.75 + SSIM_C1) / (0.25f64.powi(2) + 0.75f64.powi(2) + SSIM_C1);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-9);
        assert!((expect - 0.60007).abs() < 1e-5);
        let small = Tensor::<f64>::zeros([1, 3, 10, 16]);
        assert!(matches!(ssim(&small, &small), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn filter_adjoint_identity() {
        let taps: Vec<f64> = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let x = rand_image([2, 2, 13, 17], 5);
        let g = rand_image([2, 2, 3, 7], 6);
        let fx = filter_valid(&x, &taps);
        let ag = filter_valid_adjoint(&g, &taps, x.shape());
        let lhs: f64 = fx.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ag.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn uciqe_examples() {
        assert_eq!(uciqe(&Tensor::<f64>::full([1, 3, 8, 8], 0.4)).unwrap(), 0.0);
        let red = Tensor::<f64>::from_fn([1, 3, 8, 8], |[_, c, _, _]| if c == 0 { 1.0 } else { 0.0 });
        assert!((uciqe(&red).unwrap() - UCIQE_C3).abs() < 1e-12);
    }

    #[test]
    fn uciqe_gradient_matches_differences() {
        let x = rand_image([1, 3, 12, 12], 7).map(|v| 0.05 + 0.9 * v);
        let e = uciqe_eval(&x, 0, true);
        let grad = e.grad.unwrap();
        let p = x.shape().plane();
        for flat in [0, 17, 90, 144 + 33, 288 + 143] {
            let (c, i) = (flat / p, flat % p);
            let h = 1e-6;
            let mut up = x.clone();
            up.data_mut()[flat] += h;
            let mut dn = x.clone();
            dn.data_mut()[flat] -= h;
            let fd = (uciqe_eval(&up, 0, false).value - uciqe_eval(&dn, 0, false).value) / (2.0 * h);
            assert!((fd - grad[i][c]).abs() < 1e-6, "{flat}: {fd} vs {}", grad[i][c]);
        }
    }
}
