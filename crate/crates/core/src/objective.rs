//! Composite restoration loss `w1·Lp + w2·Ls + w3·Lu`.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::metrics::uciqe_eval;
use crate::tensor::{lit, Real, Shape, Tensor};

/// Smooth-L1 transition point.
pub const SMOOTH_L1_BETA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub pixel: f64,
    pub structural: f64,
    pub quality: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            pixel: 1.0,
            structural: 0.2,
            quality: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("pixel", self.pixel),
            ("structural", self.structural),
            ("quality", self.quality),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "loss weight `{k}` must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// The three loss terms and their weighted total, all scalar nodes.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub pixel: Var,
    pub structural: Var,
    pub quality: Var,
}

impl<T: Real> Tape<T> {
    /// Mean smooth-L1 distance: `0.5·d²/β` below `β`, `|d| − 0.5·β` above.
    pub fn smooth_l1(&self, pred: Var, target: Var, beta: f64) -> Result<Var> {
        let (sp, st) = (self.shape(pred), self.shape(target));
        if sp != st {
            return Err(Error::ShapeMismatch {
                op: "smooth_l1",
                lhs: sp,
                rhs: st,
            });
        }
        if beta.is_nan() || beta <= 0.0 {
            return Err(Error::OutOfRange(format!(
                "smooth_l1 beta must be positive, got {beta}"
            )));
        }
        let b = lit::<T>(beta);
        let half = lit::<T>(0.5);
        let total = {
            let (p, t) = (self.value(pred), self.value(target));
            p.data()
                .iter()
                .zip(t.data())
                .map(|(&p, &t)| {
                    let d = (p - t).abs();
                    if d < b {
                        half * d * d / b
                    } else {
                        d - half * b
                    }
                })
                .fold(T::zero(), |a, v| a + v)
        };
        let count = lit::<T>(sp.numel() as f64);
        let value = Tensor::scalar(total / count);
        Ok(self.push("smooth_l1", value, &[pred, target], move |g, ins, _| {
            let k = g.item() / count;
            let grad = ins[0].zip_map(ins[1], |p, t| {
                let d = p - t;
                let s = if d.abs() < b { d / b } else { d.signum() };
                k * s
            });
            let neg = grad.map(|v| -v);
            vec![Some(grad), Some(neg)]
        }))
    }

    /// Per-image UCIQE, `N × 1 × 1 × 1`, with inputs and outputs clamped to
    /// `[0, 1]`. Percentile membership is held fixed when differentiating.
    pub fn uciqe(&self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.c() != 3 {
            return Err(Error::InvalidShape(format!("uciqe expects 3 channels, got {s}")));
        }
        let values: Vec<T> = {
            let v = self.value(x);
            (0..s.n())
                .map(|n| lit(uciqe_eval(&*v, n, false).value.clamp(0.0, 1.0)))
                .collect()
        };
        let value = Tensor::from_vec(Shape::new(s.n(), 1, 1, 1), values)?;
        Ok(self.push("uciqe", value, &[x], move |g, ins, _| {
            let x = ins[0];
            let p = s.plane();
            let mut out = Tensor::zeros(s);
            for n in 0..s.n() {
                let e = uciqe_eval(x, n, true);
                if !(0.0..=1.0).contains(&e.value) {
                    continue;
                }
                let gn = g.data()[n].to_f64_lossy();
                let grad = e.grad.expect("requested");
                for c in 0..3 {
                    let base = (n * 3 + c) * p;
                    for (i, px) in grad.iter().enumerate() {
                        let xv = x.data()[base + i];
                        if xv >= T::zero() && xv <= T::one() {
                            out.data_mut()[base + i] = lit(gn * px[c]);
                        }
                    }
                }
            }
            vec![Some(out)]
        }))
    }

    /// `1 − SSIM(pred, target)`.
    pub fn ssim_loss(&self, pred: Var, target: Var) -> Result<Var> {
        let s = self.ssim(pred, target)?;
        Ok(self.rsub_scalar(T::one(), s))
    }

    /// `1 − mean UCIQE(pred)`.
    pub fn uciqe_loss(&self, pred: Var) -> Result<Var> {
        let u = self.uciqe(pred)?;
        let m = self.mean_all(u);
        Ok(self.rsub_scalar(T::one(), m))
    }

    pub fn composite_loss(&self, pred: Var, target: Var, w: &LossWeights) -> Result<LossTerms> {
        w.validate()?;
        let pixel = self.smooth_l1(pred, target, SMOOTH_L1_BETA)?;
        let structural = self.ssim_loss(pred, target)?;
        let quality = self.uciqe_loss(pred)?;
        let a = self.scale(pixel, lit(w.pixel));
        let b = self.scale(structural, lit(w.structural));
        let c = self.scale(quality, lit(w.quality));
        let total = self.add(a, b)?;
        let total = self.add(total, c)?;
        self.label(pixel, "loss.pixel");
        self.label(structural, "loss.structural");
        self.label(quality, "loss.quality");
        self.label(total, "loss.total");
        Ok(LossTerms {
            total,
            pixel,
            structural,
            quality,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::check_graph;
    use crate::metrics::{uciqe, UCIQE_C3};

    fn rand_image(shape: [usize; 4], seed: u64) -> Tensor<f64> {
        let mut s = seed;
        Tensor::from_fn(shape, |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    fn scalar_of(build: impl Fn(&Tape<f64>) -> Var) -> f64 {
        let tape = Tape::<f64>::new();
        let v = build(&tape);
        tape.item(v)
    }

    #[test]
    fn smooth_l1_branches() {
        let x = rand_image([1, 3, 4, 4], 1);
        let cases = [(0.0, 0.0), (0.5, 0.125), (2.0, 1.5), (-2.0, 1.5)];
        for (d, expect) in cases {
            let v = scalar_of(|t| {
                let p = t.constant(x.map(|v| v + d));
                let q = t.constant(x.clone());
                t.smooth_l1(p, q, 1.0).unwrap()
            });
            assert!((v - expect).abs() < 1e-12, "d={d}: {v}");
        }
    }

    #[test]
    fn ssim_loss_examples() {
        let x = rand_image([1, 3, 16, 16], 2);
        let v = scalar_of(|t| {
            let a = t.constant(x.clone());
            let b = t.constant(x.clone());
            t.ssim_loss(a, b).unwrap()
        });
        assert_eq!(v, 0.0);
        let v = scalar_of(|t| {
            let a = t.constant(Tensor::full([1, 3, 16, 16], 0.25));
            let b = t.constant(Tensor::full([1, 3, 16, 16], 0.75));
            t.ssim_loss(a, b).unwrap()
        });
        assert!((v - 0.39993).abs() < 1e-5);
    }

    #[test]
    fn uciqe_loss_examples() {
        let gray = Tensor::<f64>::full([1, 3, 8, 8], 0.5);
        let v = scalar_of(|t| {
            let x = t.constant(gray.clone());
            t.uciqe_loss(x).unwrap()
        });
        assert_eq!(v, 1.0);
        let red = Tensor::<f64>::from_fn([1, 3, 8, 8], |[_, c, _, _]| if c == 0 { 1.0 } else { 0.0 });
        let v = scalar_of(|t| {
            let x = t.constant(red.clone());
            t.uciqe_loss(x).unwrap()
        });
        assert!((v - (1.0 - UCIQE_C3)).abs() < 1e-12);
        for seed in 0..20 {
            let img = rand_image([1, 3, 12, 12], 100 + seed);
            let v = scalar_of(|t| {
                let x = t.constant(img.clone());
                t.uciqe_loss(x).unwrap()
            });
            assert!((1.0 - v - uciqe(&img).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn composite_recomposes() {
        let p = rand_image([1, 3, 16, 16], 3);
        let q = rand_image([1, 3, 16, 16], 4);
        let tape = Tape::<f64>::new();
        let (a, b) = (tape.constant(p.clone()), tape.constant(q.clone()));
        let t = tape.composite_loss(a, b, &LossWeights::default()).unwrap();
        let manual = tape.item(t.pixel) + 0.2 * tape.item(t.structural) + 0.01 * tape.item(t.quality);
        assert!((tape.item(t.total) - manual).abs() < 1e-12);

        let only = LossWeights {
            pixel: 1.0,
            structural: 0.0,
            quality: 0.0,
        };
        let t2 = tape.composite_loss(a, b, &only).unwrap();
        assert_eq!(tape.item(t2.total), tape.item(t2.pixel));

        let same = tape.composite_loss(a, a, &LossWeights::default()).unwrap();
        let u = uciqe(&p).unwrap();
        assert!((tape.item(same.total) - 0.01 * (1.0 - u)).abs() < 1e-12);

        let bad = LossWeights {
            pixel: -1.0,
            ..Default::default()
        };
        assert!(tape.composite_loss(a, b, &bad).is_err());
    }

    /// Random image whose channels occupy disjoint bands, so no pixel sits
    /// within a finite-difference step of a max/min switch.
    fn banded_image(shape: [usize; 4], seed: u64) -> Tensor<f64> {
        let noise = rand_image(shape, seed);
        Tensor::from_fn(shape, |i| [0.62, 0.33, 0.04][i[1]] + 0.25 * noise.at(i))
    }

    #[test]
    fn loss_gradients_pass_finite_differences() {
        let p = banded_image([1, 3, 16, 16], 5);
        let q = rand_image([1, 3, 16, 16], 6);
        for (name, which) in [("smooth_l1", 0), ("ssim", 1), ("uciqe", 2), ("composite", 3)] {
            let r = check_graph(name, std::slice::from_ref(&p), Some(60), 7, |t, v| {
                let target = t.constant(q.clone());
                match which {
                    0 => t.smooth_l1(v[0], target, 1.0),
                    1 => t.ssim_loss(v[0], target),
                    2 => t.uciqe_loss(v[0]),
                    _ => Ok(t.composite_loss(v[0], target, &LossWeights::default())?.total),
                }
            })
            .unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }
}
