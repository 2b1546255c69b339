//! Paired geometric augmentation.

use rand::Rng;

use crate::tensor::{Shape, Tensor};

pub const SCALE_RANGE: (f64, f64) = (0.75, 1.25);

/// One sampled transform, applied identically to input and target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentPlan {
    pub scale: f64,
    pub top: usize,
    pub left: usize,
    pub hflip: bool,
    pub vflip: bool,
    pub rot90: u8,
    pub transpose: bool,
}

/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn resize_bilinear(img: &Tensor, h: usize, w: usize) -> Tensor {
    let s = img.shape();
    if (s.h(), s.w()) == (h, w) {
        return img.clone();
    }
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f32)> {
        let ratio = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * ratio - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(inp - 1);
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, (src - i0 as f64) as f32)
            })
            .collect()
    };
    let (ys, xs) = (axis(h, s.h()), axis(w, s.w()));
    Tensor::from_fn([s.n(), s.c(), h, w], |[n, c, y, x]| {
        let (y0, y1, fy) = ys[y];
        let (x0, x1, fx) = xs[x];
        let p = img.plane(n, c);
        let row = |yy: usize| p[yy * s.w() + x0] * (1.0 - fx) + p[yy * s.w() + x1] * fx;
        row(y0) * (1.0 - fy) + row(y1) * fy
    })
}

fn remap(img: &Tensor, out: Shape, f: impl Fn(usize, usize) -> (usize, usize)) -> Tensor {
    Tensor::from_fn(out, |[n, c, y, x]| {
        let (sy, sx) = f(y, x);
        img.at([n, c, sy, sx])
    })
}

pub fn flip_horizontal(img: &Tensor) -> Tensor {
    let w = img.shape().w();
    remap(img, img.shape(), |y, x| (y, w - 1 - x))
}

pub fn flip_vertical(img: &Tensor) -> Tensor {
    let h = img.shape().h();
    remap(img, img.shape(), |y, x| (h - 1 - y, x))
}

pub fn transpose(img: &Tensor) -> Tensor {
    let s = img.shape();
    remap(img, Shape::new(s.n(), s.c(), s.w(), s.h()), |y, x| (x, y))
}

/// Rotate counter-clockwise by `k · 90°`.
pub fn rotate90(img: &Tensor, k: u8) -> Tensor {
    let mut out = img.clone();
    for _ in 0..k % 4 {
        // ccw: transpose then flip vertically
        out = flip_vertical(&transpose(&out));
    }
    out
}

pub fn crop_at(img: &Tensor, top: usize, left: usize, h: usize, w: usize) -> Tensor {
    let s = img.shape();
    remap(img, Shape::new(s.n(), s.c(), h, w), |y, x| (top + y, left + x))
}

impl AugmentPlan {
    /// Sample a transform for an `h × w` pair; `None` if the scaled pair is
    /// smaller than `patch`.
    pub fn sample(rng: &mut impl Rng, h: usize, w: usize, patch: usize) -> Option<Self> {
        let scale = rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1);
        let (sh, sw) = scaled_size(h, w, scale);
        if sh < patch || sw < patch {
            return None;
        }
        Some(AugmentPlan {
            scale,
            top: rng.random_range(0..=sh - patch),
            left: rng.random_range(0..=sw - patch),
            hflip: rng.random_bool(0.5),
            vflip: rng.random_bool(0.5),
            rot90: rng.random_range(0..4),
            transpose: rng.random_bool(0.5),
        })
    }

    /// Crop only: top-left window at native scale.
    pub fn identity() -> Self {
        AugmentPlan {
            scale: 1.0,
            top: 0,
            left: 0,
            hflip: false,
            vflip: false,
            rot90: 0,
            transpose: false,
        }
    }

    pub fn apply(&self, img: &Tensor, patch: usize) -> Tensor {
        let s = img.shape();
        let (sh, sw) = scaled_size(s.h(), s.w(), self.scale);
        let mut out = resize_bilinear(img, sh, sw);
        out = crop_at(&out, self.top, self.left, patch, patch);
        if self.hflip {
            out = flip_horizontal(&out);
        }
        if self.vflip {
            out = flip_vertical(&out);
        }
        out = rotate90(&out, self.rot90);
        if self.transpose {
            out = transpose(&out);
        }
        out
    }
}

fn scaled_size(h: usize, w: usize, scale: f64) -> (usize, usize) {
    if scale == 1.0 {
        return (h, w);
    }
    (
        ((h as f64 * scale).round() as usize).max(1),
        ((w as f64 * scale).round() as usize).max(1),
    )
}

/// Apply one random transform to a pair; `None` when the pair is too small.
pub fn augment(input: &Tensor, target: &Tensor, rng: &mut impl Rng, patch: usize) -> Option<(Tensor, Tensor)> {
    let s = input.shape();
    let plan = AugmentPlan::sample(rng, s.h(), s.w(), patch)?;
    Some((plan.apply(input, patch), plan.apply(target, patch)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn img(h: usize, w: usize) -> Tensor {
        Tensor::from_fn([1, 3, h, w], |[_, c, y, x]| (c * 1000 + y * 37 + x) as f32 / 4096.0)
    }

    #[test]
    fn flips_are_involutions_and_rotation_has_order_four() {
        let x = img(5, 7);
        assert_eq!(flip_horizontal(&flip_horizontal(&x)), x);
        assert_eq!(flip_vertical(&flip_vertical(&x)), x);
        assert_eq!(transpose(&transpose(&x)), x);
        assert_eq!(rotate90(&x, 4), x);
        assert_eq!(rotate90(&rotate90(&x, 1), 3), x);
        let r = rotate90(&x, 1);
        assert_eq!(r.shape(), Shape::new(1, 3, 7, 5));
        assert_eq!(r.at([0, 0, 0, 0]), x.at([0, 0, 0, 6]));
        assert_eq!(r.at([0, 0, 6, 4]), x.at([0, 0, 4, 0]));
    }

    #[test]
    fn patch_shape_and_determinism() {
        let x = img(48, 40);
        let y = x.map(|v| 1.0 - v);
        let run = |seed| augment(&x, &y, &mut ChaCha8Rng::seed_from_u64(seed), 32).unwrap();
        let (a, b) = run(3);
        assert_eq!(a.shape(), Shape::new(1, 3, 32, 32));
        assert_eq!(run(3), (a.clone(), b.clone()));
        // same geometry on both sides
        assert!(a.zip_map(&b, |p, q| p + q - 1.0).data().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn identical_pairs_stay_identical() {
        let x = img(44, 44);
        for seed in 0..20 {
            let (a, b) = augment(&x, &x, &mut ChaCha8Rng::seed_from_u64(seed), 32).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn too_small_is_skipped() {
        let x = img(20, 20);
        assert!(augment(&x, &x, &mut ChaCha8Rng::seed_from_u64(0), 32).is_none());
    }

    #[test]
    fn resize_preserves_constants() {
        let x = Tensor::full([1, 3, 10, 10], 0.3f32);
        let y = resize_bilinear(&x, 13, 7);
        assert!(y.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
    }
}
