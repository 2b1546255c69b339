//! `uir`: train, restore and evaluate underwater images.
//!
//! Exit status is 0 on success, 1 for usage and configuration errors and 2
//! for failures while running. Failures print one line to stderr:
//! `error: kind=<kind> msg=<message>`.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uir_core::app::{run, CliOverrides, Command, RunConfig};
use uir_core::Error;

#[derive(Parser, Debug)]
#[command(name = "uir", version, about = "Underwater image restoration")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train on paired input/target directories.
    Train(Common),
    /// Restore every image in a directory.
    Infer(Common),
    /// Write PSNR/SSIM/UCIQE as CSV.
    Eval(Common),
    /// Print parameter count and MACs.
    Summary(Common),
    /// Run finite-difference gradient checks.
    Gradcheck(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// File of `key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Cmd {
    fn split(self) -> (Command, Common) {
        match self {
            Cmd::Train(c) => (Command::Train, c),
            Cmd::Infer(c) => (Command::Infer, c),
            Cmd::Eval(c) => (Command::Eval, c),
            Cmd::Summary(c) => (Command::Summary, c),
            Cmd::Gradcheck(c) => (Command::Gradcheck, c),
        }
    }
}

fn fail(err: &Error) -> ExitCode {
    let msg = err.to_string().replace('\n', " ");
    eprintln!("error: kind={} msg={msg}", err.kind());
    match err {
        Error::Config(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, c) = cli.command.split();
    let overrides = CliOverrides {
        config: c.config,
        set: c.set,
        input: c.input,
        target: c.target,
        output: c.output,
        checkpoint: c.checkpoint,
        seed: c.seed,
    };
    let cfg = match RunConfig::resolve(command, &overrides) {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e),
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(&cfg, &mut out) {
        Ok(()) => {
            let _ = out.flush();
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
