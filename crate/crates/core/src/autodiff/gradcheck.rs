//! Central finite differences as an independent gradient oracle.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor;

use super::tape::{Tape, Var};

/// Default step for double-precision checks.
pub const FD_EPS: f64 = 1e-4;

/// Acceptance bound on [`rel_err`].
pub const FD_TOLERANCE: f64 = 1e-4;

/// `|g - ĝ| / (|g| + |ĝ| + 1e-8)`.
pub fn rel_err(g: f64, g_hat: f64) -> f64 {
    (g - g_hat).abs() / (g.abs() + g_hat.abs() + 1e-8)
}

/// `(f(x + eps·e_i) - f(x - eps·e_i)) / 2eps` for every element `i`.
pub fn finite_diff_grad(f: impl Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, eps: f64) -> Tensor<f64> {
    let idx: Vec<usize> = (0..x.numel()).collect();
    let vals = finite_diff_at(f, x, eps, &idx);
    Tensor::from_vec(x.shape(), vals).expect("same shape")
}

/// Central differences at selected flat indices only.
pub fn finite_diff_at(
    mut f: impl FnMut(&Tensor<f64>) -> f64,
    x: &Tensor<f64>,
    eps: f64,
    indices: &[usize],
) -> Vec<f64> {
    assert!(eps > 0.0, "finite difference step must be positive");
    let mut probe = x.clone();
    indices
        .iter()
        .map(|&i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + eps;
            let up = f(&probe);
            probe.data_mut()[i] = orig - eps;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Outcome of comparing tape gradients against finite differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_err < FD_TOLERANCE
    }
}

/// Check d f / d inputs for a graph built by `build`.
///
/// `build` receives one leaf per input and must return a single-element
/// node. When `sample` is `Some(k)` only `k` randomly chosen elements per
/// input are probed.
pub fn check_graph<F>(
    name: &str,
    inputs: &[Tensor<f64>],
    sample: Option<usize>,
    seed: u64,
    build: F,
) -> Result<GradCheck>
where
    F: Fn(&Tape<f64>, &[Var]) -> Result<Var>,
{
    let tape = Tape::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = build(&tape, &vars)?;
    let grads = tape.backward(out)?;

    let eval = |xs: &[Tensor<f64>]| -> f64 {
        let tape = Tape::<f64>::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = build(&tape, &vars).expect("graph builds on perturbed input");
        tape.item(out)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (k, (input, var)) in inputs.iter().zip(&vars).enumerate() {
        let analytic = grads.get(*var).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        let indices: Vec<usize> = match sample {
            Some(m) if m < input.numel() => index::sample(&mut rng, input.numel(), m).into_vec(),
            _ => (0..input.numel()).collect(),
        };
        let mut xs = inputs.to_vec();
        let numeric = finite_diff_at(
            |probe| {
                xs[k] = probe.clone();
                eval(&xs)
            },
            input,
            FD_EPS,
            &indices,
        );
        for (&i, &fd) in indices.iter().zip(&numeric) {
            worst = worst.max(rel_err(analytic.data()[i], fd));
            checked += 1;
        }
    }
    Ok(GradCheck {
        name: name.to_string(),
        max_rel_err: worst,
        checked,
    })
}
