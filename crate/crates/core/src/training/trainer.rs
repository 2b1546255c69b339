//! The epoch loop.

use std::fmt;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{parse_value, Network, ParameterStore};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::objective::LossWeights;
use crate::tensor::{Shape, Tensor};

use super::augment::AugmentPlan;
use super::checkpoint::Checkpoint;
use super::dataset::ImagePair;
use super::optim::{adamw_step, AdamW, OptimState};
use super::schedule::cosine_lr;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub patch: usize,
    pub seed: u64,
    /// Save a checkpoint every this many epochs (0 disables periodic saves).
    pub checkpoint_interval: usize,
    /// Random scale, flips, rotations and transposes; otherwise a top-left
    /// crop only.
    pub augment: bool,
    pub loss: LossWeights,
    pub adam: AdamW,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 500,
            lr_max: 2e-4,
            lr_min: 1e-6,
            patch: 256,
            seed: 0,
            checkpoint_interval: 50,
            augment: true,
            loss: LossWeights::default(),
            adam: AdamW::default(),
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "batch_size",
        "epochs",
        "lr_max",
        "lr_min",
        "patch",
        "seed",
        "checkpoint_interval",
        "augment",
        "w_pixel",
        "w_structural",
        "w_quality",
        "adam_beta1",
        "adam_beta2",
        "adam_eps",
        "weight_decay",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "lr_max" => self.lr_max = parse_value(key, value)?,
            "lr_min" => self.lr_min = parse_value(key, value)?,
            "patch" => self.patch = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "checkpoint_interval" => self.checkpoint_interval = parse_value(key, value)?,
            "augment" => self.augment = parse_value(key, value)?,
            "w_pixel" => self.loss.pixel = parse_value(key, value)?,
            "w_structural" => self.loss.structural = parse_value(key, value)?,
            "w_quality" => self.loss.quality = parse_value(key, value)?,
            "adam_beta1" => self.adam.beta1 = parse_value(key, value)?,
            "adam_beta2" => self.adam.beta2 = parse_value(key, value)?,
            "adam_eps" => self.adam.eps = parse_value(key, value)?,
            "weight_decay" => self.adam.weight_decay = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr_max", self.lr_max.to_string()),
            ("lr_min", self.lr_min.to_string()),
            ("patch", self.patch.to_string()),
            ("seed", self.seed.to_string()),
            ("checkpoint_interval", self.checkpoint_interval.to_string()),
            ("augment", self.augment.to_string()),
            ("w_pixel", self.loss.pixel.to_string()),
            ("w_structural", self.loss.structural.to_string()),
            ("w_quality", self.loss.quality.to_string()),
            ("adam_beta1", self.adam.beta1.to_string()),
            ("adam_beta2", self.adam.beta2.to_string()),
            ("adam_eps", self.adam.eps.to_string()),
            ("weight_decay", self.adam.weight_decay.to_string()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive".into());
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return bad(format!(
                "need 0 <= lr_min <= lr_max, got {} and {}",
                self.lr_min, self.lr_max
            ));
        }
        if self.patch == 0 || !self.patch.is_multiple_of(4) {
            return bad(format!("patch must be a positive multiple of 4, got {}", self.patch));
        }
        if self.patch < crate::metrics::SSIM_WINDOW {
            return bad(format!(
                "patch must be at least {} for the SSIM loss",
                crate::metrics::SSIM_WINDOW
            ));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
            || a.eps.is_nan()
            || a.eps <= 0.0
            || a.weight_decay.is_nan()
            || a.weight_decay < 0.0
        {
            return bad("AdamW needs beta1, beta2 in [0, 1), eps > 0 and weight_decay >= 0".into());
        }
        self.loss.validate()
    }
}

/// Mean losses and learning rate of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub lp: f64,
    pub ls: f64,
    pub lu: f64,
    pub lr: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} loss={} lp={} ls={} lu={} lr={}",
            self.epoch, self.loss, self.lp, self.ls, self.lu, self.lr
        )
    }
}

pub struct TrainOutcome {
    pub params: ParameterStore,
    pub optim: OptimState,
    pub history: Vec<EpochLog>,
}

/// Per-sample stream seed from `(seed, epoch, index)`.
pub fn sample_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    mix(mix(mix(seed) ^ epoch as u64) ^ index as u64)
}

fn stack(images: &[Tensor]) -> Tensor {
    let s = images[0].shape();
    let mut data = Vec::with_capacity(images.len() * s.numel());
    for t in images {
        data.extend_from_slice(t.data());
    }
    Tensor::from_vec(Shape::new(images.len(), s.c(), s.h(), s.w()), data).expect("uniform batch")
}

/// Index batches for one epoch: drop-last, or a single short batch when
/// the set is smaller than `batch_size`.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(sample_seed(seed, epoch, usize::MAX)));
    if n < batch_size {
        return vec![order];
    }
    order.chunks_exact(batch_size).map(<[usize]>::to_vec).collect()
}

struct StepLoss {
    total: f64,
    lp: f64,
    ls: f64,
    lu: f64,
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    net: &Network,
    params: &mut ParameterStore,
    optim: &mut OptimState,
    input: Tensor,
    target: Tensor,
    cfg: &TrainConfig,
    lr: f64,
    epoch: usize,
) -> Result<StepLoss> {
    let tape = Tape::<f32>::new();
    let bound = params.bind(&tape, true);
    let x = tape.constant(input);
    let y = tape.constant(target);
    let pred = net.forward(&tape, &bound, x)?;
    let terms = tape.composite_loss(pred, y, &cfg.loss)?;
    let total = tape.item(terms.total) as f64;
    if !total.is_finite() {
        let culprit = tape
            .first_non_finite()
            .map(|(i, op, label)| {
                format!(
                    "node #{i} op={op}{}",
                    label.map(|l| format!(" ({l})")).unwrap_or_default()
                )
            })
            .unwrap_or_else(|| "unknown node".into());
        return Err(Error::NonFinite(format!(
            "loss at epoch {epoch} is {total}; first non-finite value at {culprit}"
        )));
    }
    let step = StepLoss {
        total,
        lp: tape.item(terms.pixel) as f64,
        ls: tape.item(terms.structural) as f64,
        lu: tape.item(terms.quality) as f64,
    };
    let mut grads = tape.backward(terms.total)?;
    let grad_list = params.collect_grads(&bound, &mut grads)?;
    let mut grad_store = ParameterStore::new();
    for ((name, _), g) in params.iter().zip(grad_list) {
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of `{name}` at epoch {epoch}")));
        }
        grad_store.insert(name, g)?;
    }
    adamw_step(params, &grad_store, optim, lr)?;
    Ok(step)
}

/// Train `net` on `pairs`. With `out_dir`, appends log lines to
/// `train.log` and writes `epoch_NNNN.ckpt` every interval plus
/// `final.ckpt`. `resume` continues from a saved epoch.
pub fn train(
    net: &Network,
    pairs: &[ImagePair],
    cfg: &TrainConfig,
    resume: Option<Checkpoint>,
    out_dir: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Dataset("no training pairs".into()));
    }
    let (mut params, mut optim, first_epoch) = match resume {
        Some(ck) => {
            let optim = ck.optim.unwrap_or_else(|| OptimState::new(&ck.params, cfg.adam));
            (ck.params, optim, ck.epoch as usize + 1)
        }
        None => {
            let p = net.init_params(cfg.seed)?;
            let o = OptimState::new(&p, cfg.adam);
            (p, o, 1)
        }
    };
    let mut log_file = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("train.log");
            let f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            Some((path, f))
        }
        None => None,
    };
    let save = |params: &ParameterStore, optim: &OptimState, epoch: usize, name: &str| -> Result<()> {
        if let Some(dir) = out_dir {
            Checkpoint {
                config: net.config().clone(),
                epoch: epoch as u64,
                params: params.clone(),
                optim: Some(optim.clone()),
            }
            .save(&dir.join(name))?;
        }
        Ok(())
    };

    let mut history = Vec::new();
    for epoch in first_epoch..=cfg.epochs {
        let lr = cosine_lr(epoch - 1, cfg.epochs, cfg.lr_max, cfg.lr_min)?;
        let mut sums = StepLoss {
            total: 0.0,
            lp: 0.0,
            ls: 0.0,
            lu: 0.0,
        };
        let mut steps = 0usize;
        for batch in epoch_batches(pairs.len(), cfg.batch_size, cfg.seed, epoch) {
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for &i in &batch {
                let pair = &pairs[i];
                let s = pair.input.shape();
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, epoch, i));
                let plan = if cfg.augment {
                    AugmentPlan::sample(&mut rng, s.h(), s.w(), cfg.patch)
                } else {
                    (s.h() >= cfg.patch && s.w() >= cfg.patch).then(AugmentPlan::identity)
                };
                match plan {
                    Some(p) => {
                        xs.push(p.apply(&pair.input, cfg.patch));
                        ys.push(p.apply(&pair.target, cfg.patch));
                    }
                    None => log::warn!(
                        "skipping {}: {}x{} is smaller than patch {}",
                        pair.name,
                        s.h(),
                        s.w(),
                        cfg.patch
                    ),
                }
            }
            if xs.is_empty() {
                continue;
            }
            let l = train_step(net, &mut params, &mut optim, stack(&xs), stack(&ys), cfg, lr, epoch)?;
            sums.total += l.total;
            sums.lp += l.lp;
            sums.ls += l.ls;
            sums.lu += l.lu;
            steps += 1;
        }
        if steps == 0 {
            return Err(Error::Dataset(format!(
                "every pair is smaller than patch {}",
                cfg.patch
            )));
        }
        let k = steps as f64;
        let entry = EpochLog {
            epoch,
            loss: sums.total / k,
            lp: sums.lp / k,
            ls: sums.ls / k,
            lu: sums.lu / k,
            lr,
        };
        log::info!("{entry}");
        if let Some((path, f)) = log_file.as_mut() {
            writeln!(f, "{entry}").map_err(|e| Error::io(&*path, e))?;
        }
        on_epoch(&entry);
        history.push(entry);
        if cfg.checkpoint_interval > 0 && epoch % cfg.checkpoint_interval == 0 {
            save(&params, &optim, epoch, &format!("epoch_{epoch:04}.ckpt"))?;
        }
    }
    save(&params, &optim, cfg.epochs, "final.ckpt")?;
    Ok(TrainOutcome { params, optim, history })
}
