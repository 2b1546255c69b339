//! 2-D discrete Fourier transforms over the spatial dims of NCHW tensors.
//!
//! Forward transforms are unnormalized, `X[k] = Σ x[n]·e^{-2πikn/N}`; the
//! inverse carries the `1/(H·W)` factor. Power-of-two lengths use an
//! iterative radix-2 Cooley–Tukey kernel, every other length goes through
//! Bluestein's chirp-z reformulation on a power-of-two grid.

use std::f64::consts::PI;

use num_complex::Complex;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::{lit, Real, Shape, Tensor};

/// Paired real/imaginary planes of identical shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor<T: Real = f32> {
    pub re: Tensor<T>,
    pub im: Tensor<T>,
}

impl<T: Real> ComplexTensor<T> {
    pub fn new(re: Tensor<T>, im: Tensor<T>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::ShapeMismatch {
                op: "complex",
                lhs: re.shape(),
                rhs: im.shape(),
            });
        }
        Ok(ComplexTensor { re, im })
    }

    /// Real input promoted with a zero imaginary part.
    pub fn from_real(re: Tensor<T>) -> Self {
        let im = Tensor::zeros(re.shape());
        ComplexTensor { re, im }
    }

    pub fn shape(&self) -> Shape {
        self.re.shape()
    }

    fn plane(&self, idx: usize, buf: &mut [Complex<T>]) {
        let p = self.shape().plane();
        let (re, im) = (&self.re.data()[idx * p..][..p], &self.im.data()[idx * p..][..p]);
        for (b, (&r, &i)) in buf.iter_mut().zip(re.iter().zip(im)) {
            *b = Complex::new(r, i);
        }
    }

    fn from_planes(shape: Shape, planes: Vec<Complex<T>>) -> Self {
        let re = planes.iter().map(|c| c.re).collect();
        let im = planes.iter().map(|c| c.im).collect();
        ComplexTensor {
            re: Tensor::from_vec(shape, re).expect("shape"),
            im: Tensor::from_vec(shape, im).expect("shape"),
        }
    }
}

/// `e^{-2πi·k/n}` evaluated in double precision with `k` reduced mod `n`.
fn twiddle(k: u64, n: u64) -> Complex<f64> {
    let angle = -2.0 * PI * ((k % n) as f64) / n as f64;
    Complex::new(angle.cos(), angle.sin())
}

fn to_t<T: Real>(c: Complex<f64>) -> Complex<T> {
    Complex::new(lit(c.re), lit(c.im))
}

struct Radix2<T: Real> {
    n: usize,
    twiddles: Vec<Complex<T>>,
    bitrev: Vec<usize>,
}

impl<T: Real> Radix2<T> {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let twiddles = (0..n / 2).map(|k| to_t(twiddle(k as u64, n as u64))).collect();
        Radix2 { n, twiddles, bitrev }
    }

    /// In-place forward transform.
    fn forward(&self, buf: &mut [Complex<T>]) {
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for j in 0..half {
                    let w = self.twiddles[j * step];
                    let a = buf[start + j];
                    let b = buf[start + j + half] * w;
                    buf[start + j] = a + b;
                    buf[start + j + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

struct Bluestein<T: Real> {
    n: usize,
    inner: Radix2<T>,
    chirp: Vec<Complex<T>>,
    kernel_spectrum: Vec<Complex<T>>,
}

impl<T: Real> Bluestein<T> {
    fn new(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let inner = Radix2::new(m);
        // chirp[k] = e^{-πi k²/n} = twiddle(k², 2n)
        let chirp64: Vec<Complex<f64>> = (0..n as u64).map(|k| twiddle(k * k, 2 * n as u64)).collect();
        let mut kernel = vec![Complex::<T>::new(T::zero(), T::zero()); m];
        for k in 0..n {
            let c = to_t(chirp64[k].conj());
            kernel[k] = c;
            if k > 0 {
                kernel[m - k] = c;
            }
        }
        inner.forward(&mut kernel);
        Bluestein {
            n,
            inner,
            chirp: chirp64.into_iter().map(to_t).collect(),
            kernel_spectrum: kernel,
        }
    }

    fn forward(&self, buf: &mut [Complex<T>], scratch: &mut Vec<Complex<T>>) {
        let m = self.inner.n;
        scratch.clear();
        scratch.resize(m, Complex::new(T::zero(), T::zero()));
        for k in 0..self.n {
            scratch[k] = buf[k] * self.chirp[k];
        }
        self.inner.forward(scratch);
        for (s, &k) in scratch.iter_mut().zip(&self.kernel_spectrum) {
            *s = (*s * k).conj();
        }
        // inverse via conjugated forward
        self.inner.forward(scratch);
        let inv_m = lit::<T>(1.0 / m as f64);
        for k in 0..self.n {
            buf[k] = scratch[k].conj() * inv_m * self.chirp[k];
        }
    }
}

enum Plan<T: Real> {
    Radix2(Radix2<T>),
    Bluestein(Bluestein<T>),
}

/// One-dimensional transform of a fixed length.
pub struct Fft1d<T: Real> {
    plan: Plan<T>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> Fft1d<T> {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "FFT length must be positive");
        let plan = if n.is_power_of_two() {
            Plan::Radix2(Radix2::new(n))
        } else {
            Plan::Bluestein(Bluestein::new(n))
        };
        Fft1d {
            plan,
            scratch: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        match &self.plan {
            Plan::Radix2(p) => p.n,
            Plan::Bluestein(p) => p.n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&mut self, buf: &mut [Complex<T>]) {
        assert_eq!(buf.len(), self.len(), "FFT buffer length");
        match &self.plan {
            Plan::Radix2(p) => p.forward(buf),
            Plan::Bluestein(p) => p.forward(buf, &mut self.scratch),
        }
    }

    /// Inverse transform in place, including the `1/n` factor.
    pub fn inverse(&mut self, buf: &mut [Complex<T>]) {
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.forward(buf);
        let inv = lit::<T>(1.0 / buf.len() as f64);
        for v in buf.iter_mut() {
            *v = v.conj() * inv;
        }
    }
}

/// Transform one H×W plane: rows (along W) then columns (along H).
fn transform_plane<T: Real>(
    buf: &mut [Complex<T>],
    h: usize,
    w: usize,
    rows: &mut Fft1d<T>,
    cols: &mut Fft1d<T>,
    inverse: bool,
) {
    for r in buf.chunks_mut(w) {
        if inverse {
            rows.inverse(r)
        } else {
            rows.forward(r)
        }
    }
    let mut col = vec![Complex::new(T::zero(), T::zero()); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        if inverse {
            cols.inverse(&mut col)
        } else {
            cols.forward(&mut col)
        }
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
}

fn transform<T: Real>(x: &ComplexTensor<T>, inverse: bool) -> ComplexTensor<T> {
    let s = x.shape();
    let (h, w) = (s.h(), s.w());
    let p = s.plane();
    let mut planes = vec![Complex::new(T::zero(), T::zero()); s.numel()];
    parallel::for_each_chunk(&mut planes, p, |idx, buf| {
        let mut rows = Fft1d::new(w);
        let mut cols = Fft1d::new(h);
        x.plane(idx, buf);
        transform_plane(buf, h, w, &mut rows, &mut cols, inverse);
    });
    ComplexTensor::from_planes(s, planes)
}

/// Forward 2-D DFT of every (n, c) plane, unnormalized.
pub fn fft2d<T: Real>(x: &ComplexTensor<T>) -> ComplexTensor<T> {
    transform(x, false)
}

/// Inverse 2-D DFT with `1/(H·W)` normalization.
pub fn ifft2d<T: Real>(x: &ComplexTensor<T>) -> ComplexTensor<T> {
    transform(x, true)
}

/// Direct double-sum DFT, the oracle for [`fft2d`].
pub fn dft2d_naive(x: &ComplexTensor<f64>) -> ComplexTensor<f64> {
    let s = x.shape();
    let (h, w) = (s.h() as u64, s.w() as u64);
    let mut re = Tensor::zeros(s);
    let mut im = Tensor::zeros(s);
    for n in 0..s.n() {
        for c in 0..s.c() {
            for ky in 0..h {
                for kx in 0..w {
                    let mut acc = Complex::new(0.0, 0.0);
                    for y in 0..h {
                        for xx in 0..w {
                            let v = Complex::new(
                                x.re.at([n, c, y as usize, xx as usize]),
                                x.im.at([n, c, y as usize, xx as usize]),
                            );
                            acc += v * twiddle(ky * y, h) * twiddle(kx * xx, w);
                        }
                    }
                    re.set([n, c, ky as usize, kx as usize], acc.re);
                    im.set([n, c, ky as usize, kx as usize], acc.im);
                }
            }
        }
    }
    ComplexTensor { re, im }
}

/// Real and imaginary parts of a spectrum on the tape.
#[derive(Clone, Copy, Debug)]
pub struct ComplexVar {
    pub re: Var,
    pub im: Var,
}

fn pack<T: Real>(c: &ComplexTensor<T>) -> Tensor<T> {
    let s = c.shape();
    let p = s.c() * s.plane();
    let mut data = Vec::with_capacity(2 * s.numel());
    for n in 0..s.n() {
        data.extend_from_slice(&c.re.data()[n * p..][..p]);
        data.extend_from_slice(&c.im.data()[n * p..][..p]);
    }
    Tensor::from_vec(s.with_channels(2 * s.c()), data).expect("packed shape")
}

fn unpack<T: Real>(t: &Tensor<T>) -> ComplexTensor<T> {
    let s = t.shape();
    let c = s.c() / 2;
    let p = c * s.plane();
    let (mut re, mut im) = (Vec::with_capacity(s.numel() / 2), Vec::with_capacity(s.numel() / 2));
    for n in 0..s.n() {
        re.extend_from_slice(&t.data()[2 * n * p..][..p]);
        im.extend_from_slice(&t.data()[(2 * n + 1) * p..][..p]);
    }
    let half = s.with_channels(c);
    ComplexTensor {
        re: Tensor::from_vec(half, re).expect("shape"),
        im: Tensor::from_vec(half, im).expect("shape"),
    }
}

impl<T: Real> Tape<T> {
    /// Differentiable [`fft2d`]. The adjoint of the unnormalized DFT is
    /// `H·W · ifft2d`.
    pub fn fft2d(&self, x: ComplexVar) -> Result<ComplexVar> {
        self.spectral_op(x, false)
    }

    /// Differentiable [`ifft2d`]; its adjoint is `fft2d / (H·W)`.
    pub fn ifft2d(&self, x: ComplexVar) -> Result<ComplexVar> {
        self.spectral_op(x, true)
    }

    fn spectral_op(&self, x: ComplexVar, inverse: bool) -> Result<ComplexVar> {
        let input = ComplexTensor::new(self.to_tensor(x.re), self.to_tensor(x.im))?;
        let s = input.shape();
        let out = if inverse { ifft2d(&input) } else { fft2d(&input) };
        let hw = lit::<T>(s.plane() as f64);
        let op = if inverse { "ifft2d" } else { "fft2d" };
        let packed = self.push(op, pack(&out), &[x.re, x.im], move |g, _, _| {
            let gc = unpack(g);
            let back = if inverse { fft2d(&gc) } else { ifft2d(&gc) };
            let k = if inverse { T::one() / hw } else { hw };
            vec![Some(back.re.map(|v| v * k)), Some(back.im.map(|v| v * k))]
        });
        Ok(ComplexVar {
            re: self.slice_channels(packed, 0, s.c())?,
            im: self.slice_channels(packed, s.c(), s.c())?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_complex(shape: [usize; 4], seed: u64) -> ComplexTensor<f64> {
        let mut state = seed;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let re = Tensor::from_fn(shape, |_| next());
        let im = Tensor::from_fn(shape, |_| next());
        ComplexTensor { re, im }
    }

    #[test]
    fn constant_plane_is_dc_only() {
        let c = 0.7;
        let x = ComplexTensor::from_real(Tensor::full([1, 1, 6, 10], c));
        for y in [fft2d(&x), dft2d_naive(&x)] {
            for i in 0..60 {
                let (r, im) = (y.re.data()[i], y.im.data()[i]);
                let expect = if i == 0 { c * 60.0 } else { 0.0 };
                assert!((r - expect).abs() < 1e-10 && im.abs() < 1e-10, "bin {i}: {r} {im}");
            }
        }
    }

    #[test]
    fn impulse_is_flat() {
        let mut re = Tensor::zeros([1, 1, 5, 8]);
        re.set([0, 0, 0, 0], 1.0);
        let x = ComplexTensor::from_real(re);
        for y in [fft2d(&x), dft2d_naive(&x)] {
            assert!(y.re.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
            assert!(y.im.data().iter().all(|&v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn non_power_of_two_matches_naive() {
        let x = random_complex([1, 2, 12, 20], 3);
        let fast = fft2d(&x);
        let slow = dft2d_naive(&x);
        assert!(fast.re.max_abs_diff(&slow.re) < 1e-10);
        assert!(fast.im.max_abs_diff(&slow.im) < 1e-10);
    }

    #[test]
    fn round_trip_and_dc_inverse() {
        let x = random_complex([1, 3, 16, 16], 9);
        let back = ifft2d(&fft2d(&x));
        assert!(back.re.max_abs_diff(&x.re) < 1e-12 && back.im.max_abs_diff(&x.im) < 1e-12);

        let mut re = Tensor::<f64>::zeros([1, 1, 4, 6]);
        re.set([0, 0, 0, 0], 2.5 * 24.0);
        let flat = ifft2d(&ComplexTensor::from_real(re));
        assert!(flat.re.data().iter().all(|&v| (v - 2.5).abs() < 1e-12));

        let xf = x.re.cast::<f32>();
        let xs = ComplexTensor::from_real(xf.clone());
        let back32 = ifft2d(&fft2d(&xs));
        assert!(back32.re.max_abs_diff(&xf) < 1e-6);
    }

    #[test]
    fn inverse_is_linear() {
        let a = random_complex([1, 1, 7, 9], 1);
        let b = random_complex([1, 1, 7, 9], 2);
        let (ka, kb) = (0.3, -1.7);
        let comb = ComplexTensor {
            re: a.re.zip_map(&b.re, |x, y| ka * x + kb * y),
            im: a.im.zip_map(&b.im, |x, y| ka * x + kb * y),
        };
        let lhs = ifft2d(&comb);
        let (ia, ib) = (ifft2d(&a), ifft2d(&b));
        let rhs_re = ia.re.zip_map(&ib.re, |x, y| ka * x + kb * y);
        assert!(lhs.re.max_abs_diff(&rhs_re) < 1e-12);
    }

    #[test]
    fn length_one_and_two() {
        let x = random_complex([1, 1, 1, 2], 5);
        let y = fft2d(&x);
        let z = dft2d_naive(&x);
        assert!(y.re.max_abs_diff(&z.re) < 1e-14);
    }

    #[test]
    fn tape_transforms_pass_gradcheck() {
        use crate::autodiff::gradcheck::check_graph;
        let a = random_complex([1, 2, 6, 5], 11);
        let w = random_complex([1, 2, 6, 5], 12);
        let report = check_graph("fft_ifft", &[a.re, a.im, w.re], None, 0, |t, v| {
            let spec = t.fft2d(ComplexVar { re: v[0], im: v[1] })?;
            let mixed = ComplexVar {
                re: t.mul(spec.re, v[2])?,
                im: t.mul(spec.im, spec.im)?,
            };
            let back = t.ifft2d(mixed)?;
            let both = t.add(t.square(back.re), t.square(back.im))?;
            Ok(t.sum_all(both))
        })
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
