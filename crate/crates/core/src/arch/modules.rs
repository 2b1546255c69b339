//! Building blocks of the restoration network.
//!
//! Each block owns the names and shapes of its parameters, never their
//! values; values live in a [`ParameterStore`] and are looked up through a
//! [`Bound`] map at forward time.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::nn::{init_weights, ConvSpec};
use crate::spectral::ComplexVar;
use crate::tensor::{Real, Tensor};

use super::params::{Bound, ParameterStore};

/// Scale applied to the Kaiming init of the last conv in a residual branch.
pub const RESIDUAL_INIT_SCALE: f64 = 0.1;

fn mix_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, folded into the run seed
    let h = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// FFT cost: `5·HW·log2(HW)` real MACs per plane per transform.
pub fn fft_macs(h: usize, w: usize) -> u64 {
    let hw = (h * w) as f64;
    if hw <= 1.0 {
        return 0;
    }
    (5.0 * hw * hw.log2()).round() as u64
}

pub trait Module {
    /// Add freshly initialized parameters to `store`.
    fn init(&self, store: &mut ParameterStore, seed: u64) -> Result<()>;
    fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var>;
    fn param_count(&self) -> usize;
    /// Cost for an `n × C × h × w` input.
    fn macs(&self, n: usize, h: usize, w: usize) -> u64;
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub name: String,
    pub spec: ConvSpec,
    pub init_scale: f64,
    pub bias_init: f32,
}

impl Conv {
    pub fn new(name: impl Into<String>, spec: ConvSpec) -> Self {
        Conv {
            name: name.into(),
            spec,
            init_scale: 1.0,
            bias_init: 0.0,
        }
    }

    pub(crate) fn scaled(mut self, s: f64) -> Self {
        self.init_scale = s;
        self
    }

    fn with_bias_init(mut self, b: f32) -> Self {
        self.bias_init = b;
        self
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    fn vars(&self, p: &Bound) -> Result<(Var, Option<Var>)> {
        let w = p.get(&self.weight_name())?;
        let b = if self.spec.has_bias {
            Some(p.get(&self.bias_name())?)
        } else {
            None
        };
        Ok((w, b))
    }
}

impl Module for Conv {
    fn init(&self, store: &mut ParameterStore, seed: u64) -> Result<()> {
        let wb = init_weights::<f32>(&self.name, &self.spec, mix_seed(seed, &self.name));
        let s = self.init_scale as f32;
        store.insert(self.weight_name(), wb.weight.map(|v| v * s))?;
        if let Some(b) = wb.bias {
            store.insert(self.bias_name(), b.map(|_| self.bias_init))?;
        }
        Ok(())
    }

    fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let (w, b) = self.vars(p)?;
        tape.conv2d(x, w, b, &self.spec)
    }

    fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    fn macs(&self, n: usize, h: usize, w: usize) -> u64 {
        self.spec.macs(n, h, w)
    }
}

/// Residual double 3×3 conv: `x + conv(gelu(conv(x)))`.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub first: Conv,
    pub second: Conv,
}

impl ConvBlock {
    pub fn new(name: &str, channels: usize) -> Self {
        ConvBlock {
            first: Conv::new(format!("{name}.conv1"), ConvSpec::new(channels, channels, 3, 3)),
            second: Conv::new(format!("{name}.conv2"), ConvSpec::new(channels, channels, 3, 3))
                .scaled(RESIDUAL_INIT_SCALE),
        }
    }
}

impl Module for ConvBlock {
    fn init(&self, store: &mut ParameterStore, seed: u64) -> Result<()> {
        self.first.init(store, seed)?;
        self.second.init(store, seed)
    }

    fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let h = self.first.forward(tape, p, x)?;
        let h = tape.gelu(h);
        let h = self.second.forward(tape, p, h)?;
        tape.add(x, h)
    }

    fn param_count(&self) -> usize {
        self.first.param_count() + self.second.param_count()
    }

    fn macs(&self, n: usize, h: usize, w: usize) -> u64 {
        self.first.macs(n, h, w) + self.second.macs(n, h, w)
    }
}

/// Composite shape convolution: four parallel depth-wise branches
/// (`k×1`, `1×k`, `k×k`, `1×1`), GELU, a pointwise mix and a residual.
#[derive(Clone, Debug)]
pub struct Csc {
    pub branches: [Conv; 4],
    pub pointwise: Conv,
}

impl Csc {
    pub fn new(name: &str, channels: usize, k: usize) -> Self {
        let dw = |suffix: &str, kh, kw| Conv::new(format!("{name}.{suffix}"), ConvSpec::depthwise(channels, kh, kw));
        Csc {
            branches: [dw("dw_v", k, 1), dw("dw_h", 1, k), dw("dw_sq", k, k), dw("dw_pt", 1, 1)],
            pointwise: Conv::new(format!("{name}.pw"), ConvSpec::pointwise(channels, channels))
                .scaled(RESIDUAL_INIT_SCALE),
        }
    }

    /// Sum of the four branch outputs, before activation.
    pub fn branch_sum<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let mut acc = self.branches[0].forward(tape, p, x)?;
        for b in &self.branches[1..] {
            let y = b.forward(tape, p, x)?;
            acc = tape.add(acc, y)?;
        }
        Ok(acc)
    }
}

impl Module for Csc {
    fn init(&self, store: &mut ParameterStore, seed: u64) -> Result<()> {
        for b in &self.branches {
            b.init(store, seed)?;
        }
        self.pointwise.init(store, seed)
    }

    fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let s = self.branch_sum(tape, p, x)?;
        let s = tape.gelu(s);
        let y = self.pointwise.forward(tape, p, s)?;
        tape.add(x, y)
    }

    fn param_count(&self) -> usize {
        self.branches.iter().map(Conv::param_count).sum::<usize>() + self.pointwise.param_count()
    }

    fn macs(&self, n: usize, h: usize, w: usize) -> u64 {
        self.branches.iter().map(|b| b.macs(n, h, w)).sum::<u64>() + self.pointwise.macs(n, h, w)
    }
}

/// Large-kernel attention: `x ⊙ pw(dw_dilated(dw(x)))`.
#[derive(Clone, Debug)]
pub struct Lka {
    pub local: Conv,
    pub dilated: Conv,
    pub pointwise: Conv,
}

impl Lka {
    pub fn new(name: &str, channels: usize, k: usize, kd: usize, dilation: usize) -> Self {
        Lka {
            local: Conv::new(format!("{name}.dw"), ConvSpec::depthwise(channels, k, k)),
            dilated: Conv::new(
                format!("{name}.dw_dilated"),
                ConvSpec::depthwise(channels, kd, kd).with_dilation(dilation),
            ),
            // starts as a near-identity gate
            pointwise: Conv::new(format!("{name}.pw"), ConvSpec::pointwise(channels, channels))
                .scaled(RESIDUAL_INIT_SCALE)
                .with_bias_init(1.0),
        }
    }

    /// The attention map before gating.
    pub fn attention<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let a = self.local.forward(tape, p, x)?;
        let a = self.dilated.forward(tape, p, a)?;
        self.pointwise.forward(tape, p, a)
    }
}

impl Module for Lka {
    fn init(&self, store: &mut ParameterStore, seed: u64) -> Result<()> {
        self.local.init(store, seed)?;
        self.dilated.init(store, seed)?;
        self.pointwise.init(store, seed)
    }

    fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let a = self.attention(tape, p, x)?;
        tape.mul(a, x)
    }

    fn param_count(&self) -> usize {
        self.local.param_count() + self.dilated.param_count() + self.pointwise.param_count()
    }

    fn macs(&self, n: usize, h: usize, w: usize) -> u64 {
        self.local.macs(n, h, w) + self.dilated.macs(n, h, w) + self.pointwise.macs(n, h, w)
    }
}

/// Frequency-domain pixel attention:
/// `α · Re(ifft(fft(conv_a x) ⊙ conv_b x)) + β · x`.
#[derive(Clone, Debug)]
pub struct Fdpa {
    pub name: String,
    pub conv_a: Conv,
    pub conv_b: Conv,
    pub alpha_init: f32,
    pub beta_init: f32,
}

impl Fdpa {
    pub fn new(name: &str, channels: usize, alpha_init: f32, beta_init: f32) -> Self {
        Fdpa {
            name: name.to_string(),
            conv_a: Conv::new(format!("{name}.conv_a"), ConvSpec::pointwise(channels, channels)),
            conv_b: Conv::new(format!("{name}.conv_b"), ConvSpec::pointwise(channels, channels)),
            alpha_init,
            beta_init,
        }
    }

    pub fn alpha_name(&self) -> String {
        format!("{}.alpha", self.name)
    }

    pub fn beta_name(&self) -> String {
        format!("{}.beta", self.name)
    }

    /// `Re(ifft(fft(conv_a x) ⊙ conv_b x))`.
    pub fn spectral_branch<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let a = self.conv_a.forward(tape, p, x)?;
        let b = self.conv_b.forward(tape, p, x)?;
        let zeros = tape.constant(Tensor::zeros(tape.shape(a)));
        let spec = tape.fft2d(ComplexVar { re: a, im: zeros })?;
        let gated = ComplexVar {
            re: tape.mul(spec.re, b)?,
            im: tape.mul(spec.im, b)?,
        };
        Ok(tape.ifft2d(gated)?.re)
    }
}

impl Module for Fdpa {
    fn init(&self, store: &mut ParameterStore, seed: u64) -> Result<()> {
        self.conv_a.init(store, seed)?;
        self.conv_b.init(store, seed)?;
        store.insert(self.alpha_name(), Tensor::scalar(self.alpha_init))?;
        store.insert(self.beta_name(), Tensor::scalar(self.beta_init))
    }

    fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let spectral = self.spectral_branch(tape, p, x)?;
        let alpha = p.get(&self.alpha_name())?;
        let beta = p.get(&self.beta_name())?;
        let a = tape.mul(spectral, alpha)?;
        let b = tape.mul(x, beta)?;
        tape.add(a, b)
    }

    fn param_count(&self) -> usize {
        self.conv_a.param_count() + self.conv_b.param_count() + 2
    }

    fn macs(&self, n: usize, h: usize, w: usize) -> u64 {
        let planes = (n * self.conv_a.spec.out_channels) as u64;
        self.conv_a.macs(n, h, w) + self.conv_b.macs(n, h, w) + 2 * planes * fft_macs(h, w)
    }
}

/// Spatial-domain channel attention: `x ⊙ sigmoid(conv(gap(x)))`.
#[derive(Clone, Debug)]
pub struct Sdca {
    pub conv: Conv,
}

impl Sdca {
    pub fn new(name: &str, channels: usize) -> Self {
        Sdca {
            conv: Conv::new(format!("{name}.conv"), ConvSpec::pointwise(channels, channels)),
        }
    }

    /// Per-channel gates, `N × C × 1 × 1`.
    pub fn gates<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let pooled = tape.global_avg_pool(x);
        let d = self.conv.forward(tape, p, pooled)?;
        Ok(tape.sigmoid(d))
    }
}

impl Module for Sdca {
    fn init(&self, store: &mut ParameterStore, seed: u64) -> Result<()> {
        self.conv.init(store, seed)
    }

    fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let g = self.gates(tape, p, x)?;
        tape.mul(x, g)
    }

    fn param_count(&self) -> usize {
        self.conv.param_count()
    }

    fn macs(&self, n: usize, _h: usize, _w: usize) -> u64 {
        self.conv.macs(n, 1, 1)
    }
}

/// Hybrid-domain attention: FDPA followed by SDCA, either of which may be
/// ablated.
#[derive(Clone, Debug)]
pub struct Hda {
    pub fdpa: Option<Fdpa>,
    pub sdca: Option<Sdca>,
}

impl Hda {
    pub fn new(name: &str, channels: usize, fdpa: bool, sdca: bool, alpha_init: f32, beta_init: f32) -> Self {
        Hda {
            fdpa: fdpa.then(|| Fdpa::new(&format!("{name}.fdpa"), channels, alpha_init, beta_init)),
            sdca: sdca.then(|| Sdca::new(&format!("{name}.sdca"), channels)),
        }
    }
}

impl Module for Hda {
    fn init(&self, store: &mut ParameterStore, seed: u64) -> Result<()> {
        if let Some(f) = &self.fdpa {
            f.init(store, seed)?;
        }
        if let Some(s) = &self.sdca {
            s.init(store, seed)?;
        }
        Ok(())
    }

    fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let mut y = x;
        if let Some(f) = &self.fdpa {
            y = f.forward(tape, p, y)?;
        }
        if let Some(s) = &self.sdca {
            y = s.forward(tape, p, y)?;
        }
        Ok(y)
    }

    fn param_count(&self) -> usize {
        self.fdpa.as_ref().map_or(0, Fdpa::param_count) + self.sdca.as_ref().map_or(0, Sdca::param_count)
    }

    fn macs(&self, n: usize, h: usize, w: usize) -> u64 {
        self.fdpa.as_ref().map_or(0, |f| f.macs(n, h, w)) + self.sdca.as_ref().map_or(0, |s| s.macs(n, h, w))
    }
}
