//! 2-D cross-correlation with groups, stride, dilation and "same" zero
//! padding.
//!
//! Two execution paths share one contract: a direct sliding kernel for
//! depth-wise convolutions and an im2col + GEMM lowering for everything
//! else. [`conv2d_reference`] is the plain nested-loop definition both are
//! tested against.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::{gemm, MatRef};
use crate::parallel;
use crate::tensor::{Real, Shape, Tensor};

/// Static description of one convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub has_bias: bool,
}

/// Zero padding applied to the input. Odd totals put the extra row/column at
/// the bottom/right.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel_h: usize, kernel_w: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride: 1,
            dilation: 1,
            groups: 1,
            has_bias: true,
        }
    }

    /// Depth-wise `kernel_h × kernel_w` over `channels`.
    pub fn depthwise(channels: usize, kernel_h: usize, kernel_w: usize) -> Self {
        ConvSpec {
            groups: channels,
            ..Self::new(channels, channels, kernel_h, kernel_w)
        }
    }

    /// 1×1 channel-mixing convolution.
    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::new(in_channels, out_channels, 1, 1)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.has_bias = false;
        self
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.groups == self.out_channels
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Conv(msg));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 || self.dilation == 0 {
            return bad(format!("kernel, stride and dilation must be >= 1 in {self:?}"));
        }
        if self.groups == 0
            || !self.in_channels.is_multiple_of(self.groups)
            || !self.out_channels.is_multiple_of(self.groups)
        {
            return bad(format!(
                "groups={} must divide in_channels={} and out_channels={}",
                self.groups, self.in_channels, self.out_channels
            ));
        }
        Ok(())
    }

    pub fn extent_h(&self) -> usize {
        (self.kernel_h - 1) * self.dilation + 1
    }

    pub fn extent_w(&self) -> usize {
        (self.kernel_w - 1) * self.dilation + 1
    }

    /// `ceil(h / stride) × ceil(w / stride)`.
    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride), w.div_ceil(self.stride))
    }

    pub fn padding(&self, h: usize, w: usize) -> Padding {
        let (ho, wo) = self.output_hw(h, w);
        let total_h = ((ho - 1) * self.stride + self.extent_h()).saturating_sub(h);
        let total_w = ((wo - 1) * self.stride + self.extent_w()).saturating_sub(w);
        Padding {
            top: total_h / 2,
            bottom: total_h - total_h / 2,
            left: total_w / 2,
            right: total_w - total_w / 2,
        }
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel_h,
            self.kernel_w,
        )
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, self.out_channels, 1, 1)
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels / self.groups * self.kernel_h * self.kernel_w
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().numel() + if self.has_bias { self.out_channels } else { 0 }
    }

    /// Multiply-accumulates for one forward pass on an `n × C × h × w` input.
    pub fn macs(&self, n: usize, h: usize, w: usize) -> u64 {
        let (ho, wo) = self.output_hw(h, w);
        (n * self.out_channels * ho * wo) as u64 * self.fan_in() as u64
    }

    pub fn output_shape(&self, input: Shape) -> Shape {
        let (ho, wo) = self.output_hw(input.h(), input.w());
        Shape::new(input.n(), self.out_channels, ho, wo)
    }

    fn check(&self, input: Shape, weight: Shape, bias: Option<Shape>) -> Result<()> {
        self.validate()?;
        if input.c() != self.in_channels {
            return Err(Error::Conv(format!(
                "input has {} channels, spec expects {}",
                input.c(),
                self.in_channels
            )));
        }
        if weight != self.weight_shape() {
            return Err(Error::Conv(format!(
                "weight shape {weight} does not match spec {}",
                self.weight_shape()
            )));
        }
        match (bias, self.has_bias) {
            (Some(b), true) if b == self.bias_shape() => Ok(()),
            (None, false) => Ok(()),
            (b, _) => Err(Error::Conv(format!(
                "bias {:?} inconsistent with has_bias={}",
                b.map(|s| s.to_string()),
                self.has_bias
            ))),
        }
    }
}

/// Direct six-loop definition. Slow; used as the correctness oracle.
pub fn conv2d_reference<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    spec.check(input.shape(), weight.shape(), bias.map(|b| b.shape()))?;
    let s = input.shape();
    let (h, w) = (s.h() as isize, s.w() as isize);
    let pad = spec.padding(s.h(), s.w());
    let out_shape = spec.output_shape(s);
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let mut out = Tensor::zeros(out_shape);
    for n in 0..s.n() {
        for co in 0..spec.out_channels {
            let g = co / cout_g;
            for oy in 0..out_shape.h() {
                for ox in 0..out_shape.w() {
                    let mut acc = T::zero();
                    for ci in 0..cin_g {
                        for ky in 0..spec.kernel_h {
                            for kx in 0..spec.kernel_w {
                                let iy = (oy * spec.stride + ky * spec.dilation) as isize - pad.top as isize;
                                let ix = (ox * spec.stride + kx * spec.dilation) as isize - pad.left as isize;
                                if iy < 0 || iy >= h || ix < 0 || ix >= w {
                                    continue;
                                }
                                acc += weight.at([co, ci, ky, kx])
                                    * input.at([n, g * cin_g + ci, iy as usize, ix as usize]);
                            }
                        }
                    }
                    if let Some(b) = bias {
                        acc += b.data()[co];
                    }
                    out.set([n, co, oy, ox], acc);
                }
            }
        }
    }
    Ok(out)
}

/// Geometry shared by the kernels.
#[derive(Clone, Copy)]
struct Geom {
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    dil: usize,
    pad_t: usize,
    pad_l: usize,
}

impl Geom {
    fn new(spec: &ConvSpec, s: Shape) -> Self {
        let (ho, wo) = spec.output_hw(s.h(), s.w());
        let pad = spec.padding(s.h(), s.w());
        Geom {
            h: s.h(),
            w: s.w(),
            ho,
            wo,
            kh: spec.kernel_h,
            kw: spec.kernel_w,
            stride: spec.stride,
            dil: spec.dilation,
            pad_t: pad.top,
            pad_l: pad.left,
        }
    }

    /// Input row for output row `oy` and kernel row `ky`, if inside.
    #[inline]
    fn in_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky * self.dil) as isize - self.pad_t as isize;
        (iy >= 0 && (iy as usize) < self.h).then_some(iy as usize)
    }

    /// For kernel column `kx`: column offset and the valid output range.
    #[inline]
    fn col_span(&self, kx: usize) -> (isize, usize, usize) {
        let off = (kx * self.dil) as isize - self.pad_l as isize;
        let s = self.stride as isize;
        // need 0 <= ox*s + off < w
        let lo = if off >= 0 {
            0
        } else {
            (((-off) + s - 1) / s).min(self.wo as isize)
        };
        let hi = if (self.w as isize) - off <= 0 {
            0
        } else {
            (((self.w as isize) - off + s - 1) / s).min(self.wo as isize)
        };
        (off, lo as usize, (hi.max(lo)) as usize)
    }
}

fn dw_forward_plane<T: Real>(x: &[T], k: &[T], bias: T, g: &Geom, out: &mut [T]) {
    out.fill(T::zero());
    for oy in 0..g.ho {
        let orow = &mut out[oy * g.wo..(oy + 1) * g.wo];
        for ky in 0..g.kh {
            let Some(iy) = g.in_row(oy, ky) else { continue };
            let xrow = &x[iy * g.w..(iy + 1) * g.w];
            for kx in 0..g.kw {
                let wv = k[ky * g.kw + kx];
                let (off, lo, hi) = g.col_span(kx);
                if lo >= hi {
                    continue;
                }
                if g.stride == 1 {
                    let start = (lo as isize + off) as usize;
                    let src = &xrow[start..start + (hi - lo)];
                    for (o, &xv) in orow[lo..hi].iter_mut().zip(src) {
                        *o += wv * xv;
                    }
                } else {
                    for ox in lo..hi {
                        orow[ox] += wv * xrow[((ox * g.stride) as isize + off) as usize];
                    }
                }
            }
        }
    }
    if bias != T::zero() {
        for o in out.iter_mut() {
            *o += bias;
        }
    }
}

/// Gradient w.r.t. one input plane.
fn dw_backward_input_plane<T: Real>(grad: &[T], k: &[T], g: &Geom, gx: &mut [T]) {
    gx.fill(T::zero());
    for oy in 0..g.ho {
        let grow = &grad[oy * g.wo..(oy + 1) * g.wo];
        for ky in 0..g.kh {
            let Some(iy) = g.in_row(oy, ky) else { continue };
            let xrow = &mut gx[iy * g.w..(iy + 1) * g.w];
            for kx in 0..g.kw {
                let wv = k[ky * g.kw + kx];
                let (off, lo, hi) = g.col_span(kx);
                for ox in lo..hi {
                    xrow[((ox * g.stride) as isize + off) as usize] += wv * grow[ox];
                }
            }
        }
    }
}

/// Gradient w.r.t. one kernel from one plane, accumulated into `gk`.
fn dw_backward_weight_plane<T: Real>(grad: &[T], x: &[T], g: &Geom, gk: &mut [T]) {
    for oy in 0..g.ho {
        let grow = &grad[oy * g.wo..(oy + 1) * g.wo];
        for ky in 0..g.kh {
            let Some(iy) = g.in_row(oy, ky) else { continue };
            let xrow = &x[iy * g.w..(iy + 1) * g.w];
            for kx in 0..g.kw {
                let (off, lo, hi) = g.col_span(kx);
                let mut acc = T::zero();
                for ox in lo..hi {
                    acc += grow[ox] * xrow[((ox * g.stride) as isize + off) as usize];
                }
                gk[ky * g.kw + kx] += acc;
            }
        }
    }
}

/// Unfold one group of one image into a `(cin_g·kh·kw) × (ho·wo)` matrix.
fn im2col<T: Real>(x: &[T], cin_g: usize, g: &Geom, col: &mut [T]) {
    let p = g.ho * g.wo;
    col.fill(T::zero());
    for ci in 0..cin_g {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = &mut col[((ci * g.kh + ky) * g.kw + kx) * p..][..p];
                let (off, lo, hi) = g.col_span(kx);
                for oy in 0..g.ho {
                    let Some(iy) = g.in_row(oy, ky) else { continue };
                    let xrow = &plane[iy * g.w..(iy + 1) * g.w];
                    let orow = &mut row[oy * g.wo..(oy + 1) * g.wo];
                    for ox in lo..hi {
                        orow[ox] = xrow[((ox * g.stride) as isize + off) as usize];
                    }
                }
            }
        }
    }
}

/// Scatter-add the adjoint of [`im2col`].
fn col2im<T: Real>(col: &[T], cin_g: usize, g: &Geom, x: &mut [T]) {
    let p = g.ho * g.wo;
    for ci in 0..cin_g {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = &col[((ci * g.kh + ky) * g.kw + kx) * p..][..p];
                let (off, lo, hi) = g.col_span(kx);
                for oy in 0..g.ho {
                    let Some(iy) = g.in_row(oy, ky) else { continue };
                    let xrow = &mut plane[iy * g.w..(iy + 1) * g.w];
                    let grow = &row[oy * g.wo..(oy + 1) * g.wo];
                    for ox in lo..hi {
                        xrow[((ox * g.stride) as isize + off) as usize] += grow[ox];
                    }
                }
            }
        }
    }
}

/// 1×1, stride 1: the input group itself is the column matrix.
fn is_identity_unfold(spec: &ConvSpec) -> bool {
    spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1
}

/// Fast convolution forward pass.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    spec.check(input.shape(), weight.shape(), bias.map(|b| b.shape()))?;
    let s = input.shape();
    let g = Geom::new(spec, s);
    let out_shape = spec.output_shape(s);
    let mut out = Tensor::zeros(out_shape);
    let (in_plane, out_plane) = (g.h * g.w, g.ho * g.wo);
    let bias_of = |co: usize| bias.map_or(T::zero(), |b| b.data()[co]);
    let x = input.data();
    let k = weight.data();

    if spec.is_depthwise() {
        let c = spec.in_channels;
        let kk = g.kh * g.kw;
        parallel::for_each_chunk(out.data_mut(), out_plane, |idx, o| {
            let ch = idx % c;
            dw_forward_plane(
                &x[idx * in_plane..][..in_plane],
                &k[ch * kk..][..kk],
                bias_of(ch),
                &g,
                o,
            );
        });
        return Ok(out);
    }

    let groups = spec.groups;
    let cin_g = spec.in_channels / groups;
    let cout_g = spec.out_channels / groups;
    let kdim = cin_g * g.kh * g.kw;
    let direct = is_identity_unfold(spec);
    parallel::for_each_chunk(out.data_mut(), spec.out_channels * out_plane, |n, o| {
        let mut col = if direct {
            Vec::new()
        } else {
            vec![T::zero(); kdim * out_plane]
        };
        for grp in 0..groups {
            let xg = &x[(n * s.c() + grp * cin_g) * in_plane..][..cin_g * in_plane];
            let cols: &[T] = if direct {
                xg
            } else {
                im2col(xg, cin_g, &g, &mut col);
                &col
            };
            let wg = &k[grp * cout_g * kdim..][..cout_g * kdim];
            let og = &mut o[grp * cout_g * out_plane..][..cout_g * out_plane];
            gemm(
                MatRef::new(wg, cout_g, kdim),
                MatRef::new(cols, kdim, out_plane),
                T::zero(),
                og,
            );
        }
        if bias.is_some() {
            for (co, plane) in o.chunks_mut(out_plane).enumerate() {
                let b = bias_of(co);
                for v in plane {
                    *v += b;
                }
            }
        }
    });
    Ok(out)
}

/// Gradients of a convolution: `(d input, d weight, d bias)`.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: &ConvSpec,
    need_input: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Option<Tensor<T>>) {
    let s = input.shape();
    let g = Geom::new(spec, s);
    let (in_plane, out_plane) = (g.h * g.w, g.ho * g.wo);
    let x = input.data();
    let k = weight.data();
    let go = grad_out.data();
    let n_batch = s.n();

    let grad_bias = spec.has_bias.then(|| {
        let mut b = vec![T::zero(); spec.out_channels];
        for n in 0..n_batch {
            for (co, acc) in b.iter_mut().enumerate() {
                for &v in &go[(n * spec.out_channels + co) * out_plane..][..out_plane] {
                    *acc += v;
                }
            }
        }
        Tensor::from_vec(spec.bias_shape(), b).expect("bias shape")
    });

    if spec.is_depthwise() {
        let c = spec.in_channels;
        let kk = g.kh * g.kw;
        let grad_input = need_input.then(|| {
            let mut gx = Tensor::zeros(s);
            parallel::for_each_chunk(gx.data_mut(), in_plane, |idx, dst| {
                let ch = idx % c;
                dw_backward_input_plane(&go[idx * out_plane..][..out_plane], &k[ch * kk..][..kk], &g, dst);
            });
            gx
        });
        let mut gw = Tensor::zeros(weight.shape());
        parallel::for_each_chunk(gw.data_mut(), kk, |ch, dst| {
            for n in 0..n_batch {
                let idx = n * c + ch;
                dw_backward_weight_plane(
                    &go[idx * out_plane..][..out_plane],
                    &x[idx * in_plane..][..in_plane],
                    &g,
                    dst,
                );
            }
        });
        return (grad_input, gw, grad_bias);
    }

    let groups = spec.groups;
    let cin_g = spec.in_channels / groups;
    let cout_g = spec.out_channels / groups;
    let kdim = cin_g * g.kh * g.kw;
    let direct = is_identity_unfold(spec);
    let wlen = weight.numel();

    // Per-image weight gradients are reduced afterwards in batch order.
    let mut partial_w = vec![T::zero(); n_batch * wlen];
    let mut gx = Tensor::zeros(s);
    let gx_chunk = if need_input { s.c() * in_plane } else { 0 };
    let work = |n: usize, pw: &mut [T], gxn: Option<&mut [T]>| {
        let mut col = if direct {
            Vec::new()
        } else {
            vec![T::zero(); kdim * out_plane]
        };
        let mut gcol = vec![T::zero(); if need_input { kdim * out_plane } else { 0 }];
        let mut gxn = gxn;
        for grp in 0..groups {
            let xg = &x[(n * s.c() + grp * cin_g) * in_plane..][..cin_g * in_plane];
            let cols: &[T] = if direct {
                xg
            } else {
                im2col(xg, cin_g, &g, &mut col);
                &col
            };
            let gog = &go[(n * spec.out_channels + grp * cout_g) * out_plane..][..cout_g * out_plane];
            let pwg = &mut pw[grp * cout_g * kdim..][..cout_g * kdim];
            // dW = G · colᵀ
            gemm(
                MatRef::new(gog, cout_g, out_plane),
                MatRef::new(cols, kdim, out_plane).t(),
                T::zero(),
                pwg,
            );
            if let Some(gxn) = gxn.as_deref_mut() {
                let wg = &k[grp * cout_g * kdim..][..cout_g * kdim];
                let dst = &mut gxn[grp * cin_g * in_plane..][..cin_g * in_plane];
                if direct {
                    gemm(
                        MatRef::new(wg, cout_g, kdim).t(),
                        MatRef::new(gog, cout_g, out_plane),
                        T::zero(),
                        dst,
                    );
                } else {
                    gemm(
                        MatRef::new(wg, cout_g, kdim).t(),
                        MatRef::new(gog, cout_g, out_plane),
                        T::zero(),
                        &mut gcol,
                    );
                    col2im(&gcol, cin_g, &g, dst);
                }
            }
        }
    };
    if need_input {
        parallel::for_each_chunk2(&mut partial_w, wlen, gx.data_mut(), gx_chunk, |n, pw, gxn| {
            work(n, pw, Some(gxn))
        });
    } else {
        parallel::for_each_chunk(&mut partial_w, wlen, |n, pw| work(n, pw, None));
    }
    let mut gw = vec![T::zero(); wlen];
    for chunk in partial_w.chunks(wlen) {
        for (a, &b) in gw.iter_mut().zip(chunk) {
            *a += b;
        }
    }
    (
        need_input.then_some(gx),
        Tensor::from_vec(weight.shape(), gw).expect("weight shape"),
        grad_bias,
    )
}

impl<T: Real> Tape<T> {
    /// Differentiable convolution w.r.t. input, weight and bias.
    pub fn conv2d(&self, input: Var, weight: Var, bias: Option<Var>, spec: &ConvSpec) -> Result<Var> {
        let value = {
            let b = bias.map(|b| self.value(b));
            conv2d_forward(&self.value(input), &self.value(weight), b.as_deref(), spec)?
        };
        let spec = *spec;
        let need_input = self.requires_grad(input);
        let mut parents = vec![input, weight];
        parents.extend(bias);
        Ok(self.push("conv2d", value, &parents, move |g, ins, _| {
            let (gx, gw, gb) = conv2d_backward(ins[0], ins[1], g, &spec, need_input);
            let mut out = vec![gx, Some(gw)];
            if ins.len() == 3 {
                out.push(gb);
            }
            out
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_shape_law_for_network_kernels() {
        let kernels = [
            (1, 1, 1),
            (5, 5, 1),
            (7, 7, 3),
            (31, 1, 1),
            (1, 31, 1),
            (31, 31, 1),
            (3, 3, 1),
        ];
        for &(kh, kw, d) in &kernels {
            for hw in [1usize, 4, 7, 16, 64] {
                let spec = ConvSpec::depthwise(2, kh, kw).with_dilation(d);
                assert_eq!(spec.output_hw(hw, hw + 1), (hw, hw + 1));
                let p = spec.padding(hw, hw);
                assert_eq!(p.top + p.bottom + hw, hw + spec.extent_h() - 1);
            }
        }
    }

    #[test]
    fn asymmetric_pad_goes_bottom_right() {
        let spec = ConvSpec::new(1, 1, 3, 3).with_stride(2);
        let p = spec.padding(64, 64);
        assert_eq!((p.top, p.bottom, p.left, p.right), (0, 1, 0, 1));
        assert_eq!(spec.output_hw(64, 63), (32, 32));
    }

    #[test]
    fn strip_example_from_definition() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 5], vec![1., 2., 3., 4., 5.]).unwrap();
        let w = Tensor::<f64>::ones([1, 1, 1, 3]);
        let b = Tensor::<f64>::zeros([1, 1, 1, 1]);
        let spec = ConvSpec::depthwise(1, 1, 3);
        let fast = conv2d_forward(&x, &w, Some(&b), &spec).unwrap();
        let slow = conv2d_reference(&x, &w, Some(&b), &spec).unwrap();
        assert_eq!(fast.data(), &[3., 6., 9., 12., 9.]);
        assert_eq!(slow.data(), &[3., 6., 9., 12., 9.]);
    }

    #[test]
    fn identity_and_zero_kernels() {
        let x = Tensor::<f32>::from_fn([2, 3, 4, 5], |[n, c, h, w]| (n + 2 * c) as f32 - 0.25 * (h * w) as f32);
        let spec = ConvSpec::depthwise(3, 1, 1);
        let ones = Tensor::ones(spec.weight_shape());
        let zb = Tensor::zeros(spec.bias_shape());
        assert_eq!(conv2d_forward(&x, &ones, Some(&zb), &spec).unwrap(), x);
        let dense = ConvSpec::new(3, 4, 3, 3);
        let zw = Tensor::zeros(dense.weight_shape());
        let out = conv2d_forward(&x, &zw, Some(&Tensor::zeros(dense.bias_shape())), &dense).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_specs() {
        let x = Tensor::<f32>::zeros([1, 4, 4, 4]);
        let spec = ConvSpec::new(3, 6, 3, 3);
        let w = Tensor::zeros(spec.weight_shape());
        assert!(conv2d_forward(&x, &w, Some(&Tensor::zeros(spec.bias_shape())), &spec).is_err());
        let bad = ConvSpec::new(4, 6, 3, 3).with_groups(4);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn depthwise_path_is_bitwise_reference() {
        let x = Tensor::<f64>::from_fn([2, 3, 9, 7], |[n, c, h, w]| {
            ((n * 31 + c * 17 + h * 5 + w * 3) % 11) as f64 * 0.37 - 1.5
        });
        let spec = ConvSpec::depthwise(3, 7, 7).with_dilation(3);
        let w = Tensor::from_fn(spec.weight_shape(), |[o, _, h, w]| {
            ((o * 7 + h * 3 + w) % 5) as f64 * 0.21 - 0.4
        });
        let b = Tensor::from_vec(spec.bias_shape(), vec![0.1, -0.2, 0.3]).unwrap();
        let fast = conv2d_forward(&x, &w, Some(&b), &spec).unwrap();
        let slow = conv2d_reference(&x, &w, Some(&b), &spec).unwrap();
        assert_eq!(fast, slow);
    }
}
