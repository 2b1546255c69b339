//! Effective run configuration: defaults, then a `key=value` file, then
//! command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::arch::{parse_value, NetworkConfig};
use crate::error::{Error, Result};
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Infer,
    Eval,
    Summary,
    Gradcheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Infer => "infer",
            Command::Eval => "eval",
            Command::Summary => "summary",
            Command::Gradcheck => "gradcheck",
        }
    }
}

/// Paths and sizes not owned by the network or training records.
#[derive(Clone, Debug, PartialEq)]
pub struct RunPaths {
    pub input_dir: Option<PathBuf>,
    pub target_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub summary_height: usize,
    pub summary_width: usize,
}

impl Default for RunPaths {
    fn default() -> Self {
        RunPaths {
            input_dir: None,
            target_dir: None,
            output_dir: None,
            checkpoint: None,
            summary_height: 256,
            summary_width: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub paths: RunPaths,
}

/// Command-line layer applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct CliOverrides {
    pub config: Option<PathBuf>,
    pub set: Vec<String>,
    pub input: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn opt_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            paths: RunPaths::default(),
        }
    }

    /// Assign one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.network.set(key, value)? || self.train.set(key, value)? {
            return Ok(());
        }
        let p = &mut self.paths;
        match key {
            "input_dir" => p.input_dir = opt_path(value),
            "target_dir" => p.target_dir = opt_path(value),
            "output_dir" => p.output_dir = opt_path(value),
            "checkpoint" => p.checkpoint = opt_path(value),
            "summary_height" => p.summary_height = parse_value(key, value)?,
            "summary_width" => p.summary_width = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Apply a config file: `key=value` lines, `#` comments, blank lines.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{}:{}: expected key=value", path.display(), no + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), no + 1)))?;
        }
        Ok(())
    }

    /// Defaults < config file < `--set` pairs < dedicated flags.
    pub fn resolve(command: Command, cli: &CliOverrides) -> Result<Self> {
        let mut cfg = RunConfig::new(command);
        if let Some(path) = &cli.config {
            cfg.apply_file(path)?;
        }
        for pair in &cli.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{pair}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(p) = &cli.input {
            cfg.paths.input_dir = Some(p.clone());
        }
        if let Some(p) = &cli.target {
            cfg.paths.target_dir = Some(p.clone());
        }
        if let Some(p) = &cli.output {
            cfg.paths.output_dir = Some(p.clone());
        }
        if let Some(p) = &cli.checkpoint {
            cfg.paths.checkpoint = Some(p.clone());
        }
        if let Some(s) = cli.seed {
            cfg.train.seed = s;
        }
        cfg.network.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Every effective key, one `key=value` per line.
    pub fn echo(&self) -> String {
        let show = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut out = String::new();
        writeln!(out, "command={}", self.command.name()).expect("write to string");
        let extra = [
            ("input_dir", show(&self.paths.input_dir)),
            ("target_dir", show(&self.paths.target_dir)),
            ("output_dir", show(&self.paths.output_dir)),
            ("checkpoint", show(&self.paths.checkpoint)),
            ("summary_height", self.paths.summary_height.to_string()),
            ("summary_width", self.paths.summary_width.to_string()),
        ];
        for (k, v) in self
            .network
            .entries()
            .into_iter()
            .chain(self.train.entries())
            .chain(extra)
        {
            writeln!(out, "{k}={v}").expect("write to string");
        }
        out
    }
}
