//! Paired degraded/clean images.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{list_images, load_image};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct ImagePair {
    pub name: String,
    pub input_path: Option<PathBuf>,
    pub target_path: Option<PathBuf>,
    pub input: Tensor,
    pub target: Tensor,
}

impl ImagePair {
    pub fn new(name: impl Into<String>, input: Tensor, target: Tensor) -> Result<Self> {
        if input.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "image pair",
                lhs: input.shape(),
                rhs: target.shape(),
            });
        }
        Ok(ImagePair {
            name: name.into(),
            input_path: None,
            target_path: None,
            input,
            target,
        })
    }
}

/// Pair every image in `input_dir` with the same file name in `target_dir`.
/// Unreadable, unmatched or size-mismatched pairs are skipped with a
/// warning; an empty result is an error.
pub fn load_pairs(input_dir: &Path, target_dir: &Path) -> Result<Vec<ImagePair>> {
    let mut pairs = Vec::new();
    for input_path in list_images(input_dir)? {
        let file = input_path.file_name().expect("listed files have names");
        let target_path = target_dir.join(file);
        let name = file.to_string_lossy().into_owned();
        let loaded = load_image(&input_path).and_then(|i| Ok((i, load_image(&target_path)?)));
        let (input, target) = match loaded {
            Ok(v) => v,
            Err(e) => {
                log::warn!("skipping pair {name}: {e}");
                continue;
            }
        };
        match ImagePair::new(&name, input, target) {
            Ok(mut p) => {
                p.input_path = Some(input_path);
                p.target_path = Some(target_path);
                pairs.push(p);
            }
            Err(e) => log::warn!("skipping pair {name}: {e}"),
        }
    }
    if pairs.is_empty() {
        return Err(Error::Dataset(format!(
            "no usable image pairs in {} / {}",
            input_dir.display(),
            target_dir.display()
        )));
    }
    Ok(pairs)
}

/// Deterministic synthetic scenes and their underwater renderings.
///
/// Clean images are smooth colour fields with a few soft blobs. Degraded
/// images follow `I = J·t + B·(1 − t)` with per-channel transmission
/// `t = exp(−β_c · d)` over a smooth depth map `d`, red attenuating fastest.
pub fn synthetic_pairs(count: usize, size: usize, seed: u64) -> Vec<ImagePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let base: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.25..0.75));
            let grad: [[f32; 2]; 3] =
                std::array::from_fn(|_| [rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25)]);
            let blobs: Vec<([f32; 2], f32, [f32; 3])> = (0..4)
                .map(|_| {
                    (
                        [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)],
                        rng.random_range(0.08..0.2),
                        std::array::from_fn(|_| rng.random_range(-0.3..0.3)),
                    )
                })
                .collect();
            let depth = (rng.random_range(0.4..0.8f32), rng.random_range(-0.3..0.3f32));
            let beta = [
                rng.random_range(1.0..1.4f32),
                rng.random_range(0.4..0.6),
                rng.random_range(0.25..0.4),
            ];
            let back = [
                rng.random_range(0.02..0.08f32),
                rng.random_range(0.3..0.4),
                rng.random_range(0.4..0.5),
            ];

            let s = size as f32;
            let clean = Tensor::from_fn([1, 3, size, size], |[_, c, y, x]| {
                let (u, v) = (x as f32 / s, y as f32 / s);
                let mut val = base[c] + grad[c][0] * (u - 0.5) + grad[c][1] * (v - 0.5);
                for (centre, radius, colour) in &blobs {
                    let d2 = (u - centre[0]).powi(2) + (v - centre[1]).powi(2);
                    val += colour[c] * (-d2 / (2.0 * radius * radius)).exp();
                }
                val.clamp(0.02, 0.98)
            });
            let degraded = Tensor::from_fn([1, 3, size, size], |[_, c, y, x]| {
                let d = depth.0 + depth.1 * (y as f32 / s - 0.5);
                let t = (-beta[c] * d).exp();
                clean.at([0, c, y, x]) * t + back[c] * (1.0 - t)
            });
            ImagePair::new(format!("synthetic_{k:03}"), degraded, clean).expect("same shape")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::save_image;

    #[test]
    fn synthetic_is_deterministic_and_in_range() {
        let a = synthetic_pairs(3, 16, 9);
        let b = synthetic_pairs(3, 16, 9);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.input, q.input);
            assert_eq!(p.target, q.target);
            assert!(p
                .input
                .data()
                .iter()
                .chain(p.target.data())
                .all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert_ne!(a[0].target, a[1].target);
    }

    #[test]
    fn loads_matching_pairs_and_skips_the_rest() {
        let dir = tempfile::tempdir().unwrap();
        let (inp, tgt) = (dir.path().join("in"), dir.path().join("gt"));
        std::fs::create_dir_all(&inp).unwrap();
        std::fs::create_dir_all(&tgt).unwrap();
        let img = Tensor::full([1, 3, 4, 4], 0.5f32);
        save_image(&inp.join("a.ppm"), &img).unwrap();
        save_image(&tgt.join("a.ppm"), &img).unwrap();
        save_image(&inp.join("b.ppm"), &img).unwrap();
        save_image(&inp.join("c.ppm"), &img).unwrap();
        save_image(&tgt.join("c.ppm"), &Tensor::full([1, 3, 4, 8], 0.5f32)).unwrap();
        let pairs = load_pairs(&inp, &tgt).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].name, "a.ppm");

        let empty = dir.path().join("empty");
        std::fs::create_dir_all(&empty).unwrap();
        assert!(matches!(load_pairs(&empty, &tgt), Err(Error::Dataset(_))));
    }
}
