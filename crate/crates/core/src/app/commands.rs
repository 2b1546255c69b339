//! The five CLI commands, writing their reports to any `Write`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::arch::{Network, ParameterStore};
use crate::error::{Error, Result};
use crate::io::{crop, list_images, load_image, pad_to_multiple, save_image};
use crate::metrics::{psnr, ssim, uciqe, MetricReport, MetricRow};
use crate::tensor::{Shape, Tensor};
use crate::training::{load_pairs, train, Checkpoint, TrainOutcome};

use super::config::{Command, RunConfig};
use super::gradcheck;

/// Spatial multiple the network needs; inputs are reflect-padded to it.
pub const SIZE_MULTIPLE: usize = 4;

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("`{what}` is required for this command")))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

/// Dispatch on `cfg.command`.
pub fn run(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    log::info!("effective configuration:\n{}", cfg.echo());
    match cfg.command {
        Command::Train => cmd_train(cfg, out).map(|_| ()),
        Command::Infer => cmd_infer(cfg, out).map(|_| ()),
        Command::Eval => cmd_eval(cfg, out).map(|_| ()),
        Command::Summary => cmd_summary(cfg, out),
        Command::Gradcheck => cmd_gradcheck(cfg, out),
    }
}

/// Train on `input_dir`/`target_dir`, writing logs and checkpoints to
/// `output_dir`. A `checkpoint` resumes training.
pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<TrainOutcome> {
    let input = required(&cfg.paths.input_dir, "input_dir")?;
    let target = required(&cfg.paths.target_dir, "target_dir")?;
    let out_dir = required(&cfg.paths.output_dir, "output_dir")?;
    let net = Network::new(&cfg.network)?;
    let resume = match &cfg.paths.checkpoint {
        Some(p) => Some(Checkpoint::load_compatible(p, &cfg.network)?),
        None => None,
    };
    let pairs = load_pairs(input, target)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cfg_path = out_dir.join("config.txt");
    fs::write(&cfg_path, cfg.echo()).map_err(|e| Error::io(&cfg_path, e))?;
    emit(out, &format!("pairs={} params={}\n", pairs.len(), net.param_count()))?;
    train(&net, &pairs, &cfg.train, resume, Some(out_dir), &mut |log| {
        // a closed stdout must not abort training; the log file has the record
        let _ = writeln!(out, "{log}");
    })
}

fn load_model(cfg: &RunConfig) -> Result<(Network, ParameterStore)> {
    let path = required(&cfg.paths.checkpoint, "checkpoint")?;
    let ck = Checkpoint::load_compatible(path, &cfg.network)?;
    Ok((Network::new(&cfg.network)?, ck.params))
}

/// Restore one image of any size: reflect-pad to a multiple of 4, run the
/// network, crop back.
pub fn restore(net: &Network, params: &ParameterStore, image: &Tensor) -> Result<Tensor> {
    let (padded, (h, w)) = pad_to_multiple(image, SIZE_MULTIPLE)?;
    let y = net.infer(params, &padded)?;
    crop(&y, h, w)
}

/// Restore every image in `input_dir` into `output_dir`, keeping names.
pub fn cmd_infer(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let input = required(&cfg.paths.input_dir, "input_dir")?;
    let out_dir = required(&cfg.paths.output_dir, "output_dir")?;
    let (net, params) = load_model(cfg)?;
    let files = list_images(input)?;
    if files.is_empty() {
        return Err(Error::Dataset(format!("no images in {}", input.display())));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::with_capacity(files.len());
    for f in &files {
        let img = load_image(f)?;
        let y = restore(&net, &params, &img)?;
        let dest = out_dir.join(f.file_name().expect("listed files have names"));
        save_image(&dest, &y)?;
        emit(out, &format!("{} -> {}\n", f.display(), dest.display()))?;
        written.push(dest);
    }
    Ok(written)
}

fn score(name: String, img: &Tensor, target: Option<&Tensor>) -> Result<MetricRow> {
    let (full_psnr, full_ssim) = match target {
        Some(t) => {
            if img.shape() != t.shape() {
                return Err(Error::ShapeMismatch {
                    op: "eval",
                    lhs: img.shape(),
                    rhs: t.shape(),
                });
            }
            (Some(psnr(img, t)?), Some(ssim(img, t)?))
        }
        None => (None, None),
    };
    Ok(MetricRow {
        name,
        psnr: full_psnr,
        ssim: full_ssim,
        uciqe: uciqe(img)?,
    })
}

/// Score the images in `input_dir`, against same-named images in
/// `target_dir` when given. With a `checkpoint` the inputs are restored
/// first. The CSV goes to stdout and, with `output_dir`, to a file: the
/// path itself when it ends in `.csv`, else `metrics.csv` inside it.
pub fn cmd_eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<MetricReport> {
    let input = required(&cfg.paths.input_dir, "input_dir")?;
    let model = match cfg.paths.checkpoint {
        Some(_) => Some(load_model(cfg)?),
        None => None,
    };
    let files = list_images(input)?;
    if files.is_empty() {
        return Err(Error::Dataset(format!("no images in {}", input.display())));
    }
    let mut report = MetricReport::default();
    for f in &files {
        let file_name = f.file_name().expect("listed files have names");
        let mut img = load_image(f)?;
        if let Some((net, params)) = &model {
            img = restore(net, params, &img)?;
        }
        let target = match &cfg.paths.target_dir {
            Some(dir) => {
                let tp = dir.join(file_name);
                if !tp.exists() {
                    return Err(Error::Dataset(format!("no target for {}", f.display())));
                }
                Some(load_image(&tp)?)
            }
            None => None,
        };
        report.push(score(file_name.to_string_lossy().into_owned(), &img, target.as_ref())?);
    }
    let csv = report.to_csv();
    emit(out, &csv)?;
    if let Some(dest) = &cfg.paths.output_dir {
        let path = if dest.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            dest.clone()
        } else {
            fs::create_dir_all(dest).map_err(|e| Error::io(dest, e))?;
            dest.join("metrics.csv")
        };
        report.write_csv(&path)?;
    }
    Ok(report)
}

/// Parameter count and MACs at `summary_height × summary_width`.
pub fn cmd_summary(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let net = Network::new(&cfg.network)?;
    let shape = Shape::new(1, 3, cfg.paths.summary_height, cfg.paths.summary_width);
    let cost = net.cost(shape)?;
    emit(
        out,
        &format!(
            "input={}x{}x{}x{}\nparams={}\nparams_m={:.3}\nmacs={}\ngmacs={:.3}\n",
            shape.n(),
            shape.c(),
            shape.h(),
            shape.w(),
            cost.params,
            cost.params as f64 / 1e6,
            cost.macs,
            cost.macs as f64 / 1e9
        ),
    )
}

/// Finite-difference checks per layer type and for the whole network.
pub fn cmd_gradcheck(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let rows = gradcheck::run_all(&cfg.network, cfg.train.seed)?;
    emit(out, &gradcheck::format_table(&rows))?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::GradCheck(failed.join(",")))
    }
}
