//! Double-precision gradient checks for every layer type, plus a sampled
//! check of the whole network.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{Bound, ConvBlock, Csc, Fdpa, Hda, Lka, Module, Network, NetworkConfig, ParameterStore, Sdca};
use crate::autodiff::gradcheck::{check_graph, finite_diff_at, rel_err, GradCheck, FD_EPS};
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::nn::{downsample_spec, upsample_spec, ConvSpec};
use crate::objective::{LossWeights, SMOOTH_L1_BETA};
use crate::spectral::ComplexVar;
use crate::tensor::{Shape, Tensor};

/// Nonzero FDPA `α` used for checks, so the spectral branch contributes.
pub const CHECK_ALPHA: f64 = 0.7;

/// Elements probed per tensor in module checks.
const PER_TENSOR: usize = 6;

/// Parameters sampled in the whole-network check.
pub const NETWORK_SAMPLE: usize = 50;

fn uniform(shape: impl Into<Shape>, lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

// channel-banded image: keeps HSV max/min channels well separated
fn banded(shape: [usize; 4], seed: u64) -> Tensor<f64> {
    let noise = uniform(shape, 0.0, 1.0, seed);
    Tensor::from_fn(shape, |i| [0.62, 0.33, 0.04][i[1]] + 0.25 * noise.at(i))
}

/// `Σ y ⊙ r` for a fixed random `r`, so every output element matters.
fn project(tape: &Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let r = tape.constant(uniform(tape.shape(y), -1.0, 1.0, seed ^ 0x5eed));
    let p = tape.mul(y, r)?;
    Ok(tape.sum_all(p))
}

fn conv_case(name: &str, spec: ConvSpec, hw: usize, seed: u64) -> Result<GradCheck> {
    let x = uniform([1, spec.in_channels, hw, hw], -1.0, 1.0, seed);
    let w = uniform(spec.weight_shape(), -0.5, 0.5, seed + 1);
    let b = uniform(spec.bias_shape(), -0.5, 0.5, seed + 2);
    check_graph(name, &[x, w, b], Some(PER_TENSOR * 4), seed, |t, v| {
        let y = t.conv2d(v[0], v[1], Some(v[2]), &spec)?;
        project(t, y, seed)
    })
}

enum Sample {
    PerTensor(usize),
    Params(usize),
}

/// Compare tape gradients with finite differences over the input and the
/// parameters of `forward`.
fn check_store<F>(
    name: &str,
    store: &ParameterStore<f64>,
    x: &Tensor<f64>,
    sample: Sample,
    seed: u64,
    forward: F,
) -> Result<GradCheck>
where
    F: Fn(&Tape<f64>, &Bound, Var) -> Result<Var>,
{
    let objective =
        |store: &ParameterStore<f64>, x: &Tensor<f64>, grad: bool| -> Result<(Tape<f64>, Bound, Var, Var)> {
            let tape = Tape::new();
            let bound = store.bind(&tape, grad);
            let xv = tape.leaf(x.clone(), grad);
            let y = forward(&tape, &bound, xv)?;
            let loss = project(&tape, y, seed)?;
            Ok((tape, bound, xv, loss))
        };
    let (tape, bound, xv, loss) = objective(store, x, true)?;
    let mut grads = tape.backward(loss)?;
    let mut analytic = vec![grads.take(xv).unwrap_or_else(|| Tensor::zeros(x.shape()))];
    analytic.extend(store.collect_grads(&bound, &mut grads)?);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = analytic.iter().map(Tensor::numel).collect();
    let mut probes: Vec<(usize, usize)> = Vec::new();
    match sample {
        Sample::PerTensor(k) => {
            for (t, &n) in sizes.iter().enumerate() {
                let picks = index::sample(&mut rng, n, k.min(n));
                probes.extend(picks.into_iter().map(|i| (t, i)));
            }
        }
        Sample::Params(k) => {
            let total: usize = sizes[1..].iter().sum();
            for flat in index::sample(&mut rng, total, k.min(total)) {
                let (mut t, mut rem) = (1, flat);
                while rem >= sizes[t] {
                    rem -= sizes[t];
                    t += 1;
                }
                probes.push((t, rem));
            }
        }
    }

    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut worst = 0.0f64;
    for &(t, i) in &probes {
        let base = if t == 0 {
            x.clone()
        } else {
            store.get(&names[t - 1])?.clone()
        };
        let fd = finite_diff_at(
            |probe| {
                let mut s = store.clone();
                let mut xx = x.clone();
                if t == 0 {
                    xx = probe.clone();
                } else {
                    *s.get_mut(&names[t - 1]).expect("known name") = probe.clone();
                }
                let (tape, _, _, loss) = objective(&s, &xx, false).expect("graph builds on perturbed input");
                tape.item(loss)
            },
            &base,
            FD_EPS,
            &[i],
        )[0];
        worst = worst.max(rel_err(analytic[t].data()[i], fd));
    }
    Ok(GradCheck {
        name: name.to_string(),
        max_rel_err: worst,
        checked: probes.len(),
    })
}

fn set_alpha(store: &mut ParameterStore<f64>, alpha: f64) {
    for (k, v) in store.iter_mut() {
        if k.ends_with(".alpha") {
            v.data_mut().fill(alpha);
        }
    }
}

fn module_case<M: Module>(name: &str, m: &M, channels: usize, hw: usize, seed: u64) -> Result<GradCheck> {
    let mut store = ParameterStore::new();
    m.init(&mut store, seed)?;
    let mut store = store.cast::<f64>();
    set_alpha(&mut store, CHECK_ALPHA);
    let x = uniform([1, channels, hw, hw], -1.0, 1.0, seed + 7);
    check_store(name, &store, &x, Sample::PerTensor(PER_TENSOR), seed, |t, p, x| {
        m.forward(t, p, x)
    })
}

/// Layer-by-layer checks in double precision.
pub fn layer_checks(seed: u64) -> Result<Vec<GradCheck>> {
    let mut out = vec![
        conv_case("conv3x3", ConvSpec::new(3, 5, 3, 3), 9, seed)?,
        conv_case("conv_strided", ConvSpec::new(4, 6, 3, 3).with_stride(2), 10, seed + 1)?,
        conv_case(
            "conv_dilated_dw",
            ConvSpec::depthwise(4, 7, 7).with_dilation(3),
            12,
            seed + 2,
        )?,
        conv_case("conv_strip31", ConvSpec::depthwise(2, 31, 1), 8, seed + 3)?,
        conv_case("conv_grouped", ConvSpec::new(4, 6, 3, 3).with_groups(2), 7, seed + 4)?,
        conv_case("conv_pointwise", ConvSpec::pointwise(5, 3), 6, seed + 5)?,
    ];

    let x = uniform([2, 3, 5, 4], -2.0, 2.0, seed + 10);
    out.push(check_graph("gelu", std::slice::from_ref(&x), None, seed, |t, v| {
        let y = t.gelu(v[0]);
        project(t, y, seed)
    })?);
    out.push(check_graph("sigmoid", &[x], None, seed, |t, v| {
        let y = t.sigmoid(v[0]);
        project(t, y, seed)
    })?);

    let x = uniform([1, 3, 6, 8], -1.0, 1.0, seed + 11);
    let dspec = downsample_spec(3);
    let (w, b) = (
        uniform(dspec.weight_shape(), -0.5, 0.5, 1),
        uniform(dspec.bias_shape(), -0.5, 0.5, 2),
    );
    out.push(check_graph(
        "downsample",
        &[x, w, b],
        Some(PER_TENSOR * 4),
        seed,
        |t, v| {
            let y = t.downsample_block(v[0], v[1], Some(v[2]))?;
            project(t, y, seed)
        },
    )?);
    let x = uniform([1, 4, 3, 5], -1.0, 1.0, seed + 12);
    let uspec = upsample_spec(4);
    let (w, b) = (
        uniform(uspec.weight_shape(), -0.5, 0.5, 3),
        uniform(uspec.bias_shape(), -0.5, 0.5, 4),
    );
    out.push(check_graph(
        "upsample",
        &[x, w, b],
        Some(PER_TENSOR * 4),
        seed,
        |t, v| {
            let y = t.upsample_block(v[0], v[1], Some(v[2]))?;
            project(t, y, seed)
        },
    )?);

    let re = uniform([1, 2, 6, 5], -1.0, 1.0, seed + 13);
    let im = uniform([1, 2, 6, 5], -1.0, 1.0, seed + 14);
    let gate = uniform([1, 2, 6, 5], -1.0, 1.0, seed + 15);
    out.push(check_graph("fft2d", &[re, im, gate], None, seed, |t, v| {
        let f = t.fft2d(ComplexVar { re: v[0], im: v[1] })?;
        let g = ComplexVar {
            re: t.mul(f.re, v[2])?,
            im: t.mul(f.im, v[2])?,
        };
        let y = t.ifft2d(g)?;
        let a = project(t, y.re, seed)?;
        let b = project(t, y.im, seed + 1)?;
        t.add(a, b)
    })?);

    out.push(module_case("conv_block", &ConvBlock::new("b", 4), 4, 6, seed + 20)?);
    out.push(module_case("csc", &Csc::new("c", 3, 7), 3, 8, seed + 21)?);
    out.push(module_case("lka", &Lka::new("l", 3, 5, 7, 3), 3, 8, seed + 22)?);
    out.push(module_case(
        "fdpa",
        &Fdpa::new("f", 3, CHECK_ALPHA as f32, 1.0),
        3,
        6,
        seed + 23,
    )?);
    out.push(module_case("sdca", &Sdca::new("s", 3), 3, 5, seed + 24)?);
    out.push(module_case(
        "hda",
        &Hda::new("h", 3, true, true, CHECK_ALPHA as f32, 1.0),
        3,
        6,
        seed + 25,
    )?);

    let pred = uniform([1, 3, 12, 12], 0.05, 0.95, seed + 30);
    let target = uniform([1, 3, 12, 12], 0.05, 0.95, seed + 31);
    out.push(check_graph(
        "smooth_l1",
        &[pred.clone(), target.clone()],
        None,
        seed,
        |t, v| t.smooth_l1(v[0], v[1], SMOOTH_L1_BETA),
    )?);
    out.push(check_graph(
        "ssim_loss",
        &[pred.clone(), target.clone()],
        Some(40),
        seed,
        |t, v| t.ssim_loss(v[0], v[1]),
    )?);
    let img = banded([1, 3, 12, 12], seed + 32);
    out.push(check_graph(
        "uciqe_loss",
        std::slice::from_ref(&img),
        Some(60),
        seed,
        |t, v| t.uciqe_loss(v[0]),
    )?);
    let w = LossWeights::default();
    out.push(check_graph(
        "composite_loss",
        &[img, target],
        Some(40),
        seed,
        |t, v| Ok(t.composite_loss(v[0], v[1], &w)?.total),
    )?);
    Ok(out)
}

/// Sampled parameter check of the default network on `1×3×16×16`.
pub fn network_check(cfg: &NetworkConfig, seed: u64) -> Result<GradCheck> {
    let net = Network::new(cfg)?;
    let mut store = net.init_params(seed)?.cast::<f64>();
    set_alpha(&mut store, CHECK_ALPHA);
    let x = uniform([1, 3, 16, 16], 0.0, 1.0, seed + 40);
    check_store(
        "network",
        &store,
        &x,
        Sample::Params(NETWORK_SAMPLE),
        seed,
        |t, p, x| net.forward(t, p, x),
    )
}

/// All layer checks followed by the network check.
pub fn run_all(cfg: &NetworkConfig, seed: u64) -> Result<Vec<GradCheck>> {
    let mut rows = layer_checks(seed)?;
    rows.push(network_check(cfg, seed)?);
    Ok(rows)
}

/// Fixed-width PASS/FAIL table.
pub fn format_table(rows: &[GradCheck]) -> String {
    let mut s = format!("{:<16} {:>12} {:>8}  result\n", "layer", "max_rel_err", "checked");
    for r in rows {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        s.push_str(&format!(
            "{:<16} {:>12.3e} {:>8}  {verdict}\n",
            r.name, r.max_rel_err, r.checked
        ));
    }
    s
}
