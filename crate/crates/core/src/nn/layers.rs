//! Resampling, pooling, activations and weight initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

use super::conv::ConvSpec;

/// Weights of one convolution, keyed by a unique parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightBundle<T: Real = f32> {
    pub name: String,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

/// Kaiming-normal weights (`std = sqrt(2 / fan_in)`) and zero bias,
/// deterministic per seed.
pub fn init_weights<T: Real>(name: &str, spec: &ConvSpec, seed: u64) -> WeightBundle<T> {
    let std = (2.0 / spec.fan_in() as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = spec.weight_shape();
    let data = (0..shape.numel())
        .map(|_| T::from_f64_lossy(normal.sample(&mut rng)))
        .collect();
    WeightBundle {
        name: name.to_string(),
        weight: Tensor::from_vec(shape, data).expect("weight shape"),
        bias: spec.has_bias.then(|| Tensor::zeros(spec.bias_shape())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Sigmoid,
}

/// 3×3 stride-2 convolution doubling channels.
pub fn downsample_spec(channels: usize) -> ConvSpec {
    ConvSpec::new(channels, 2 * channels, 3, 3).with_stride(2)
}

/// 1×1 convolution doubling channels; followed by a factor-2 depth-to-space
/// this nets `channels / 2` at twice the resolution.
pub fn upsample_spec(channels: usize) -> ConvSpec {
    ConvSpec::pointwise(channels, 2 * channels)
}

/// `out[c, 2y+i, 2x+j] = in[4c + 2i + j, y, x]` for factor 2.
pub fn depth_to_space<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if !s.c().is_multiple_of(r * r) {
        return Err(Error::InvalidShape(format!("depth_to_space({r}) on {s}")));
    }
    let c_out = s.c() / (r * r);
    let out_shape = Shape::new(s.n(), c_out, s.h() * r, s.w() * r);
    let mut out = Tensor::zeros(out_shape);
    let (h, w) = (s.h(), s.w());
    for n in 0..s.n() {
        for c in 0..c_out {
            for i in 0..r {
                for j in 0..r {
                    let src = x.plane(n, c * r * r + i * r + j);
                    for y in 0..h {
                        for xx in 0..w {
                            out.set([n, c, y * r + i, xx * r + j], src[y * w + xx]);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse rearrangement of [`depth_to_space`].
pub fn space_to_depth<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if !s.h().is_multiple_of(r) || !s.w().is_multiple_of(r) {
        return Err(Error::InvalidShape(format!("space_to_depth({r}) on {s}")));
    }
    let (h, w) = (s.h() / r, s.w() / r);
    Ok(Tensor::from_fn([s.n(), s.c() * r * r, h, w], |[n, c, y, xx]| {
        let (base, sub) = (c / (r * r), c % (r * r));
        x.at([n, base, y * r + sub / r, xx * r + sub % r])
    }))
}

impl<T: Real> Tape<T> {
    pub fn depth_to_space(&self, x: Var, r: usize) -> Result<Var> {
        let value = depth_to_space(&self.value(x), r)?;
        Ok(self.push("depth_to_space", value, &[x], move |g, _, _| {
            vec![Some(space_to_depth(g, r).expect("inverse shape"))]
        }))
    }

    /// Spatial mean per channel: `N × C × 1 × 1`.
    pub fn global_avg_pool(&self, x: Var) -> Var {
        self.mean(x, &[2, 3]).expect("valid axes")
    }

    pub fn activation(&self, x: Var, kind: Activation) -> Var {
        match kind {
            Activation::Gelu => self.gelu(x),
            Activation::Sigmoid => self.sigmoid(x),
        }
    }

    /// Halve H and W, double C. Requires even spatial dims.
    pub fn downsample_block(&self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let s = self.shape(x);
        if !s.h().is_multiple_of(2) || !s.w().is_multiple_of(2) {
            return Err(Error::Spatial {
                op: "downsample_block",
                h: s.h(),
                w: s.w(),
                rule: "even",
            });
        }
        self.conv2d(x, weight, bias, &downsample_spec(s.c()))
    }

    /// Double H and W, halve C. Requires an even channel count.
    pub fn upsample_block(&self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let c = self.shape(x).c();
        if !c.is_multiple_of(2) {
            return Err(Error::OddChannels {
                op: "upsample_block",
                channels: c,
            });
        }
        let y = self.conv2d(x, weight, bias, &upsample_spec(c))?;
        self.depth_to_space(y, 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_down_up(c: usize, hw: usize) -> (Shape, Shape) {
        let tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::zeros([1, c, hw, hw]));
        let d = init_weights::<f32>("d", &downsample_spec(c), 1);
        let dw = tape.constant(d.weight);
        let db = tape.constant(d.bias.unwrap());
        let y = tape.downsample_block(x, dw, Some(db)).unwrap();
        let u = init_weights::<f32>("u", &upsample_spec(2 * c), 2);
        let uw = tape.constant(u.weight);
        let ub = tape.constant(u.bias.unwrap());
        let z = tape.upsample_block(y, uw, Some(ub)).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
        (tape.shape(y), tape.shape(z))
    }

    #[test]
    fn resampling_shape_laws() {
        assert_eq!(
            run_down_up(36, 64),
            (Shape::new(1, 72, 32, 32), Shape::new(1, 36, 64, 64))
        );
        let (d, u) = run_down_up(72, 32);
        assert_eq!(d, Shape::new(1, 144, 16, 16));
        assert_eq!(u, Shape::new(1, 72, 32, 32));
    }

    #[test]
    fn upsample_from_bottleneck() {
        let tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::zeros([1, 144, 16, 16]));
        let u = init_weights::<f32>("u", &upsample_spec(144), 3);
        let (w, b) = (tape.constant(u.weight), tape.constant(u.bias.unwrap()));
        let y = tape.upsample_block(x, w, Some(b)).unwrap();
        assert_eq!(tape.shape(y), Shape::new(1, 72, 32, 32));
    }

    #[test]
    fn resampling_guards() {
        let tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::zeros([1, 2, 5, 4]));
        let d = init_weights::<f32>("d", &downsample_spec(2), 1);
        let (w, b) = (tape.constant(d.weight), tape.constant(d.bias.unwrap()));
        assert!(matches!(
            tape.downsample_block(x, w, Some(b)),
            Err(Error::Spatial { .. })
        ));
        let y = tape.constant(Tensor::zeros([1, 3, 4, 4]));
        let u = init_weights::<f32>("u", &ConvSpec::pointwise(3, 6), 1);
        let (w, b) = (tape.constant(u.weight), tape.constant(u.bias.unwrap()));
        assert!(matches!(
            tape.upsample_block(y, w, Some(b)),
            Err(Error::OddChannels { .. })
        ));
    }

    #[test]
    fn depth_to_space_inverts() {
        let x = Tensor::<f64>::from_fn([2, 8, 3, 5], |[n, c, h, w]| (n * 1000 + c * 100 + h * 10 + w) as f64);
        let y = depth_to_space(&x, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 2, 6, 10));
        assert_eq!(y.at([0, 1, 3, 4]), x.at([0, (4 + 2), 1, 2]));
        assert_eq!(space_to_depth(&y, 2).unwrap(), x);
    }

    #[test]
    fn pooling_examples() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(
            Tensor::from_vec([1, 2, 2, 2], vec![0., 1., 2., 3., 4., 4., 4., 4.]).unwrap(),
            true,
        );
        let p = tape.global_avg_pool(x);
        assert_eq!(tape.value(p).data(), &[1.5, 4.0]);
        let s = tape.sum_all(p);
        let g = tape.backward(s).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn init_is_deterministic_with_kaiming_scale() {
        let spec = ConvSpec::new(16, 40, 4, 4);
        let a = init_weights::<f32>("a", &spec, 7);
        let b = init_weights::<f32>("a", &spec, 7);
        assert_eq!(a, b);
        assert!(a.bias.as_ref().unwrap().data().iter().all(|&v| v == 0.0));
        let w = a.weight.data();
        assert!(w.len() >= 10_000);
        let mean = w.iter().map(|&v| v as f64).sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let target = (2.0 / 256.0f64).sqrt();
        assert!((var.sqrt() - target).abs() < 0.1 * target);
    }
}
