//! Elementwise, reduction and activation operations on the tape.

use crate::error::{Error, Result};
use crate::tensor::{lit, Real, Shape, Tensor};

use super::tape::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Apply `f` elementwise with `b` broadcast over `a`'s shape.
pub(crate) fn broadcast_zip<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let sa = a.shape();
    let sb = b.shape();
    if sa == sb {
        return a.zip_map(b, f);
    }
    debug_assert!(sa.accepts_broadcast(&sb));
    let full = sb.strides();
    let bs: [usize; 4] = std::array::from_fn(|i| if sb.0[i] == 1 { 0 } else { full[i] });
    let [n, c, h, w] = sa.0;
    let (ad, bd) = (a.data(), b.data());
    let mut out = Vec::with_capacity(sa.numel());
    let mut ai = 0;
    for i in 0..n {
        for j in 0..c {
            for y in 0..h {
                let base = i * bs[0] + j * bs[1] + y * bs[2];
                for x in 0..w {
                    out.push(f(ad[ai], bd[base + x * bs[3]]));
                    ai += 1;
                }
            }
        }
    }
    Tensor::from_vec(sa, out).expect("shape preserved")
}

/// Sum over the dims flagged in `axes`; reduced dims become 1. Accumulation
/// is sequential in row-major order.
pub(crate) fn sum_axes<T: Real>(t: &Tensor<T>, axes: [bool; 4]) -> Tensor<T> {
    let s = t.shape();
    let out_shape = Shape(std::array::from_fn(|i| if axes[i] { 1 } else { s.0[i] }));
    if out_shape == s {
        return t.clone();
    }
    let full = out_shape.strides();
    let os: [usize; 4] = std::array::from_fn(|i| if axes[i] { 0 } else { full[i] });
    let mut out = vec![T::zero(); out_shape.numel()];
    let [n, c, h, w] = s.0;
    let d = t.data();
    let mut k = 0;
    for i in 0..n {
        for j in 0..c {
            for y in 0..h {
                let base = i * os[0] + j * os[1] + y * os[2];
                for x in 0..w {
                    out[base + x * os[3]] += d[k];
                    k += 1;
                }
            }
        }
    }
    Tensor::from_vec(out_shape, out).expect("reduced shape")
}

/// Sum `g` down to `target` (the inverse of broadcasting).
pub(crate) fn reduce_to<T: Real>(g: &Tensor<T>, target: Shape) -> Tensor<T> {
    let s = g.shape();
    if s == target {
        return g.clone();
    }
    sum_axes(g, std::array::from_fn(|i| target.0[i] == 1 && s.0[i] != 1))
}

/// Stretch `t` to `shape` along its size-1 dims.
pub(crate) fn expand<T: Real>(t: &Tensor<T>, shape: Shape) -> Tensor<T> {
    broadcast_zip(&Tensor::zeros(shape), t, |_, b| b)
}

fn axes_mask(axes: &[usize]) -> Result<[bool; 4]> {
    let mut mask = [false; 4];
    for &a in axes {
        if a >= 4 {
            return Err(Error::InvalidAxis(a));
        }
        mask[a] = true;
    }
    Ok(mask)
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

// tanh form of GELU
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[inline]
fn gelu<T: Real>(x: T) -> T {
    let u = lit::<T>(GELU_C) * (x + lit::<T>(GELU_A) * x * x * x);
    lit::<T>(0.5) * x * (T::one() + u.tanh())
}

#[inline]
fn gelu_grad<T: Real>(x: T) -> T {
    let c = lit::<T>(GELU_C);
    let a = lit::<T>(GELU_A);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + lit::<T>(3.0) * a * x * x);
    lit::<T>(0.5) * (T::one() + t) + lit::<T>(0.5) * x * (T::one() - t * t) * du
}

/// Scalar helpers usable outside the tape (metrics, tests).
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    sigmoid(x)
}

pub fn gelu_scalar<T: Real>(x: T) -> T {
    gelu(x)
}

impl<T: Real> Tape<T> {
    /// Elementwise `a op b` with `b` broadcast over `a` along size-1 dims.
    pub fn binary(&self, a: Var, b: Var, op: BinaryOp) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !sa.accepts_broadcast(&sb) {
            let name = match op {
                BinaryOp::Add => "add",
                BinaryOp::Sub => "sub",
                BinaryOp::Mul => "mul",
                BinaryOp::Div => "div",
            };
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: sa,
                rhs: sb,
            });
        }
        let value = {
            let (va, vb) = (self.value(a), self.value(b));
            match op {
                BinaryOp::Add => broadcast_zip(&va, &vb, |x, y| x + y),
                BinaryOp::Sub => broadcast_zip(&va, &vb, |x, y| x - y),
                BinaryOp::Mul => broadcast_zip(&va, &vb, |x, y| x * y),
                BinaryOp::Div => broadcast_zip(&va, &vb, |x, y| x / y),
            }
        };
        let v = match op {
            BinaryOp::Add => self.push("add", value, &[a, b], move |g, _, _| {
                vec![Some(g.clone()), Some(reduce_to(g, sb))]
            }),
            BinaryOp::Sub => self.push("sub", value, &[a, b], move |g, _, _| {
                vec![Some(g.clone()), Some(reduce_to(g, sb).map(|v| -v))]
            }),
            BinaryOp::Mul => self.push("mul", value, &[a, b], move |g, ins, _| {
                let ga = broadcast_zip(g, ins[1], |g, y| g * y);
                let gb = reduce_to(&g.zip_map(ins[0], |g, x| g * x), sb);
                vec![Some(ga), Some(gb)]
            }),
            BinaryOp::Div => self.push("div", value, &[a, b], move |g, ins, out| {
                let ga = broadcast_zip(g, ins[1], |g, y| g / y);
                let gb_full = broadcast_zip(&g.zip_map(out, |g, q| -g * q), ins[1], |v, y| v / y);
                vec![Some(ga), Some(reduce_to(&gb_full, sb))]
            }),
        };
        Ok(v)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Add)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Sub)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Mul)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Div)
    }

    /// `a * k` for a constant `k`.
    pub fn scale(&self, a: Var, k: T) -> Var {
        let value = self.value(a).map(|v| v * k);
        self.push("scale", value, &[a], move |g, _, _| vec![Some(g.map(|v| v * k))])
    }

    /// `a + k` for a constant `k`.
    pub fn add_scalar(&self, a: Var, k: T) -> Var {
        let value = self.value(a).map(|v| v + k);
        self.push("add_scalar", value, &[a], |g, _, _| vec![Some(g.clone())])
    }

    /// `k - a` for a constant `k`.
    pub fn rsub_scalar(&self, k: T, a: Var) -> Var {
        let value = self.value(a).map(|v| k - v);
        self.push("rsub_scalar", value, &[a], |g, _, _| vec![Some(g.map(|v| -v))])
    }

    pub fn square(&self, a: Var) -> Var {
        let value = self.value(a).map(|v| v * v);
        self.push("square", value, &[a], |g, ins, _| {
            vec![Some(g.zip_map(ins[0], |g, x| lit::<T>(2.0) * g * x))]
        })
    }

    /// Sum over `axes`; reduced dims become size 1.
    pub fn sum(&self, a: Var, axes: &[usize]) -> Result<Var> {
        let mask = axes_mask(axes)?;
        let shape = self.shape(a);
        let value = sum_axes(&self.value(a), mask);
        Ok(self.push("sum", value, &[a], move |g, _, _| vec![Some(expand(g, shape))]))
    }

    /// Mean over `axes`: sum divided by the number of reduced elements.
    pub fn mean(&self, a: Var, axes: &[usize]) -> Result<Var> {
        let mask = axes_mask(axes)?;
        let shape = self.shape(a);
        let count: usize = (0..4).filter(|&i| mask[i]).map(|i| shape.0[i]).product();
        let denom = lit::<T>(count as f64);
        let value = sum_axes(&self.value(a), mask).map(|v| v / denom);
        Ok(self.push("mean", value, &[a], move |g, _, _| {
            vec![Some(expand(&g.map(|v| v / denom), shape))]
        }))
    }

    pub fn sum_all(&self, a: Var) -> Var {
        self.sum(a, &[0, 1, 2, 3]).expect("valid axes")
    }

    pub fn mean_all(&self, a: Var) -> Var {
        self.mean(a, &[0, 1, 2, 3]).expect("valid axes")
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push("sigmoid", value, &[a], |g, _, out| {
            vec![Some(g.zip_map(out, |g, s| g * s * (T::one() - s)))]
        })
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self, a: Var) -> Var {
        let value = self.value(a).map(gelu);
        self.push("gelu", value, &[a], |g, ins, _| {
            vec![Some(g.zip_map(ins[0], |g, x| g * gelu_grad(x)))]
        })
    }

    /// Clamp to `[lo, hi]`; gradient passes where the input lies inside the
    /// closed interval.
    pub fn clamp(&self, a: Var, lo: T, hi: T) -> Var {
        let value = self.value(a).map(|v| v.max(lo).min(hi));
        self.push("clamp", value, &[a], move |g, ins, _| {
            vec![Some(g.zip_map(
                ins[0],
                |g, x| {
                    if x >= lo && x <= hi {
                        g
                    } else {
                        T::zero()
                    }
                },
            ))]
        })
    }

    /// Stack along the channel dim.
    pub fn concat_channels(&self, parts: &[Var]) -> Result<Var> {
        assert!(!parts.is_empty(), "concat of nothing");
        let first = self.shape(parts[0]);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.n() != first.n() || s.h() != first.h() || s.w() != first.w() {
                return Err(Error::ShapeMismatch {
                    op: "concat_channels",
                    lhs: first,
                    rhs: s,
                });
            }
            widths.push(s.c());
        }
        let total_c: usize = widths.iter().sum();
        let out_shape = first.with_channels(total_c);
        let plane = first.plane();
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..first.n() {
            for (&p, &c) in parts.iter().zip(&widths) {
                let v = self.value(p);
                data.extend_from_slice(&v.data()[n * c * plane..(n + 1) * c * plane]);
            }
        }
        let value = Tensor::from_vec(out_shape, data)?;
        Ok(self.push("concat_channels", value, parts, move |g, _, _| {
            let mut offset = 0;
            widths
                .iter()
                .map(|&c| {
                    let part = slice_channels(g, offset, c);
                    offset += c;
                    Some(part)
                })
                .collect()
        }))
    }

    /// Channels `start..start + len`.
    pub fn slice_channels(&self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a);
        if len == 0 || start + len > s.c() {
            return Err(Error::InvalidShape(format!(
                "channel slice {start}..{} of {s}",
                start + len
            )));
        }
        let value = slice_channels(&self.value(a), start, len);
        Ok(self.push("slice_channels", value, &[a], move |g, _, _| {
            let plane = s.plane();
            let mut full = Tensor::zeros(s);
            for n in 0..s.n() {
                let src = &g.data()[n * len * plane..(n + 1) * len * plane];
                let dst = (n * s.c() + start) * plane;
                full.data_mut()[dst..dst + len * plane].copy_from_slice(src);
            }
            vec![Some(full)]
        }))
    }
}

pub(crate) fn slice_channels<T: Real>(t: &Tensor<T>, start: usize, len: usize) -> Tensor<T> {
    let s = t.shape();
    let plane = s.plane();
    let mut data = Vec::with_capacity(s.n() * len * plane);
    for n in 0..s.n() {
        let from = (n * s.c() + start) * plane;
        data.extend_from_slice(&t.data()[from..from + len * plane]);
    }
    Tensor::from_vec(s.with_channels(len), data).expect("slice shape")
}
