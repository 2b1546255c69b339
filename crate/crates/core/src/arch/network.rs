//! The three-level encoder, bottleneck and decoder.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{downsample_spec, upsample_spec, ConvSpec};
use crate::tensor::{Real, Shape, Tensor};

use super::config::NetworkConfig;
use super::modules::{Conv, ConvBlock, Csc, Hda, Lka, Module, RESIDUAL_INIT_SCALE};
use super::params::{Bound, ParameterStore};

/// Attention or bottleneck modules attached at one point of the network.
#[derive(Clone, Debug)]
pub enum Stage {
    Hda(Hda),
    Lka(Lka),
    Csc(Csc),
}

impl Stage {
    fn as_module(&self) -> &dyn ModuleCost {
        match self {
            Stage::Hda(m) => m,
            Stage::Lka(m) => m,
            Stage::Csc(m) => m,
        }
    }

    fn init(&self, store: &mut ParameterStore, seed: u64) -> Result<()> {
        match self {
            Stage::Hda(m) => m.init(store, seed),
            Stage::Lka(m) => m.init(store, seed),
            Stage::Csc(m) => m.init(store, seed),
        }
    }

    fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        match self {
            Stage::Hda(m) => m.forward(tape, p, x),
            Stage::Lka(m) => m.forward(tape, p, x),
            Stage::Csc(m) => m.forward(tape, p, x),
        }
    }
}

/// Object-safe slice of [`Module`] for cost accounting.
trait ModuleCost {
    fn params(&self) -> usize;
    fn cost(&self, n: usize, h: usize, w: usize) -> u64;
}

impl<M: Module> ModuleCost for M {
    fn params(&self) -> usize {
        self.param_count()
    }

    fn cost(&self, n: usize, h: usize, w: usize) -> u64 {
        self.macs(n, h, w)
    }
}

/// Modules and optional backbone block at one resolution.
#[derive(Clone, Debug, Default)]
pub struct Level {
    pub stages: Vec<Stage>,
    pub block: Option<ConvBlock>,
}

impl Level {
    fn init(&self, store: &mut ParameterStore, seed: u64) -> Result<()> {
        for s in &self.stages {
            s.init(store, seed)?;
        }
        if let Some(b) = &self.block {
            b.init(store, seed)?;
        }
        Ok(())
    }

    fn run_stages<T: Real>(&self, tape: &Tape<T>, p: &Bound, mut x: Var) -> Result<Var> {
        for s in &self.stages {
            x = s.forward(tape, p, x)?;
        }
        Ok(x)
    }

    fn run_block<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        match &self.block {
            Some(b) => b.forward(tape, p, x),
            None => Ok(x),
        }
    }

    fn params(&self) -> usize {
        self.stages.iter().map(|s| s.as_module().params()).sum::<usize>()
            + self.block.as_ref().map_or(0, |b| b.param_count())
    }

    fn macs(&self, n: usize, h: usize, w: usize) -> u64 {
        self.stages.iter().map(|s| s.as_module().cost(n, h, w)).sum::<u64>()
            + self.block.as_ref().map_or(0, |b| b.macs(n, h, w))
    }
}

/// Parameter and compute totals for one input size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cost {
    pub params: usize,
    pub macs: u64,
}

#[derive(Clone, Debug)]
pub struct Network {
    cfg: NetworkConfig,
    pub stem: Conv,
    pub enc1: Level,
    pub down1: Conv,
    pub enc2: Level,
    pub down2: Conv,
    pub enc3: Level,
    pub bottleneck: Level,
    pub dec3: Level,
    pub up2: Conv,
    pub dec2: Level,
    pub up1: Conv,
    pub dec1: Level,
    pub head: Conv,
}

impl Network {
    pub fn new(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let c1 = cfg.base_channels;
        let (c2, c3) = (2 * c1, 4 * c1);
        let reps = cfg.blocks_per_level;
        let use_fdpa = cfg.hda_enabled && cfg.fdpa_enabled;
        let use_sdca = cfg.hda_enabled && cfg.sdca_enabled;
        let hda = |name: &str| -> Vec<Stage> {
            if !(use_fdpa || use_sdca) {
                return Vec::new();
            }
            (0..reps)
                .map(|i| {
                    Stage::Hda(Hda::new(
                        &format!("{name}.hda{i}"),
                        c1,
                        use_fdpa,
                        use_sdca,
                        cfg.alpha_init,
                        cfg.beta_init,
                    ))
                })
                .collect()
        };
        let lka = |name: &str, c: usize| -> Vec<Stage> {
            if !cfg.lka_enabled {
                return Vec::new();
            }
            (0..reps)
                .map(|i| {
                    Stage::Lka(Lka::new(
                        &format!("{name}.lka{i}"),
                        c,
                        cfg.lka_kernel,
                        cfg.lka_dilated_kernel,
                        cfg.lka_dilation,
                    ))
                })
                .collect()
        };
        let block = |name: &str, c: usize| cfg.conv_blocks.then(|| ConvBlock::new(&format!("{name}.block"), c));
        let level = |name: &str, c: usize, stages: Vec<Stage>| Level {
            stages,
            block: block(name, c),
        };
        let csc = if cfg.csc_enabled {
            (0..reps)
                .map(|i| Stage::Csc(Csc::new(&format!("bottleneck.csc{i}"), c3, cfg.csc_kernel)))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Network {
            cfg: cfg.clone(),
            stem: Conv::new("stem", ConvSpec::new(3, c1, 3, 3)),
            enc1: level("enc1", c1, hda("enc1")),
            down1: Conv::new("down1", downsample_spec(c1)),
            enc2: level("enc2", c2, lka("enc2", c2)),
            down2: Conv::new("down2", downsample_spec(c2)),
            enc3: level("enc3", c3, lka("enc3", c3)),
            bottleneck: level("bottleneck", c3, csc),
            dec3: level("dec3", c3, lka("dec3", c3)),
            up2: Conv::new("up2", upsample_spec(c3)),
            dec2: level("dec2", c2, lka("dec2", c2)),
            up1: Conv::new("up1", upsample_spec(c2)),
            dec1: level("dec1", c1, hda("dec1")),
            head: Conv::new("head", ConvSpec::new(c1, 3, 3, 3)).scaled(RESIDUAL_INIT_SCALE),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    /// Fresh Kaiming-initialized parameters; identical for identical seeds.
    pub fn init_params(&self, seed: u64) -> Result<ParameterStore> {
        let mut store = ParameterStore::new();
        self.stem.init(&mut store, seed)?;
        self.enc1.init(&mut store, seed)?;
        self.down1.init(&mut store, seed)?;
        self.enc2.init(&mut store, seed)?;
        self.down2.init(&mut store, seed)?;
        self.enc3.init(&mut store, seed)?;
        self.bottleneck.init(&mut store, seed)?;
        self.dec3.init(&mut store, seed)?;
        self.up2.init(&mut store, seed)?;
        self.dec2.init(&mut store, seed)?;
        self.up1.init(&mut store, seed)?;
        self.dec1.init(&mut store, seed)?;
        self.head.init(&mut store, seed)?;
        Ok(store)
    }

    fn check_input(&self, s: Shape) -> Result<()> {
        if s.c() != 3 {
            return Err(Error::InvalidShape(format!(
                "network expects 3 input channels, got {s}"
            )));
        }
        if !s.h().is_multiple_of(4) || !s.w().is_multiple_of(4) || s.h() == 0 || s.w() == 0 {
            return Err(Error::Spatial {
                op: "network",
                h: s.h(),
                w: s.w(),
                rule: "positive multiples of 4",
            });
        }
        Ok(())
    }

    /// Unclamped restoration of `x` (`N×3×H×W`, H and W multiples of 4).
    pub fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        self.check_input(tape.shape(x))?;
        let f = self.stem.forward(tape, p, x)?;
        let f = self.enc1.run_stages(tape, p, f)?;
        let e1 = self.enc1.run_block(tape, p, f)?;

        let (w, b) = (p.get(&self.down1.weight_name())?, p.get(&self.down1.bias_name())?);
        let f = tape.downsample_block(e1, w, Some(b))?;
        let f = self.enc2.run_stages(tape, p, f)?;
        let e2 = self.enc2.run_block(tape, p, f)?;

        let (w, b) = (p.get(&self.down2.weight_name())?, p.get(&self.down2.bias_name())?);
        let f = tape.downsample_block(e2, w, Some(b))?;
        let f = self.enc3.run_stages(tape, p, f)?;
        let f = self.enc3.run_block(tape, p, f)?;

        let f = self.bottleneck.run_stages(tape, p, f)?;
        let f = self.bottleneck.run_block(tape, p, f)?;

        let f = self.dec3.run_block(tape, p, f)?;
        let f = self.dec3.run_stages(tape, p, f)?;
        let (w, b) = (p.get(&self.up2.weight_name())?, p.get(&self.up2.bias_name())?);
        let f = tape.upsample_block(f, w, Some(b))?;
        let f = tape.add(f, e2)?;

        let f = self.dec2.run_block(tape, p, f)?;
        let f = self.dec2.run_stages(tape, p, f)?;
        let (w, b) = (p.get(&self.up1.weight_name())?, p.get(&self.up1.bias_name())?);
        let f = tape.upsample_block(f, w, Some(b))?;
        let f = tape.add(f, e1)?;

        let f = self.dec1.run_block(tape, p, f)?;
        let f = self.dec1.run_stages(tape, p, f)?;
        let r = self.head.forward(tape, p, f)?;
        tape.add(x, r)
    }

    /// Inference: forward without gradients, clamped to `[0, 1]`.
    pub fn infer(&self, params: &ParameterStore, image: &Tensor) -> Result<Tensor> {
        let tape = Tape::<f32>::new();
        let p = params.bind(&tape, false);
        let x = tape.constant(image.clone());
        let y = self.forward(&tape, &p, x)?;
        let out = tape.value(y).map(|v| v.clamp(0.0, 1.0));
        Ok(out)
    }

    fn convs(&self) -> [(&Conv, usize); 6] {
        [
            (&self.stem, 1),
            (&self.down1, 1),
            (&self.down2, 2),
            (&self.up2, 4),
            (&self.up1, 2),
            (&self.head, 1),
        ]
    }

    fn levels(&self) -> [(&Level, usize); 7] {
        [
            (&self.enc1, 1),
            (&self.enc2, 2),
            (&self.enc3, 4),
            (&self.bottleneck, 4),
            (&self.dec3, 4),
            (&self.dec2, 2),
            (&self.dec1, 1),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.convs().iter().map(|(c, _)| c.param_count()).sum::<usize>()
            + self.levels().iter().map(|(l, _)| l.params()).sum::<usize>()
    }

    /// Parameters and MACs for an input of shape `input`. Each conv
    /// contributes `out_elements · in_channels/groups · kH · kW`, each 2-D
    /// FFT `5·HW·log2(HW)` per plane; elementwise work is not counted.
    pub fn cost(&self, input: Shape) -> Result<Cost> {
        self.check_input(input)?;
        let (n, h, w) = (input.n(), input.h(), input.w());
        // every conv and level is listed with the downscale factor of its input
        let macs = self.convs().iter().map(|(c, f)| c.macs(n, h / f, w / f)).sum::<u64>()
            + self.levels().iter().map(|(l, f)| l.macs(n, h / f, w / f)).sum::<u64>();
        Ok(Cost {
            params: self.param_count(),
            macs,
        })
    }
}

/// `(params, macs)` of the network described by `cfg` at `input`.
pub fn count_params_macs(cfg: &NetworkConfig, input: Shape) -> Result<Cost> {
    Network::new(cfg)?.cost(input)
}
