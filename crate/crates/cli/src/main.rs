//! `visnav`: synthetic data generation, detection, tracking and
//! closed-loop rendezvous simulation.

mod commands;
mod config;
mod overlay;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::error;

use visnav::rvsim::{ScenarioKind, SensingMode};

use commands::Outcome;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "visnav",
    version,
    about = "Vision-based rendezvous navigation pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic approach sequence with ground truth.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Detect the target independently in every frame of a directory.
    Detect {
        images: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Track the target through a frame sequence.
    Track {
        images: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        redetect_every: Option<usize>,
    },
    /// Run a closed-loop rendezvous scenario.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_kind)]
        scenario: Option<ScenarioKind>,
        #[arg(long, value_parser = parse_mode, default_value = "synthetic-images")]
        mode: SensingMode,
    },
}

fn parse_kind(s: &str) -> Result<ScenarioKind, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<SensingMode, String> {
    s.parse()
}

fn setup(common: &Common) -> anyhow::Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate().context("invalid configuration")?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .context("no output directory: pass --out or set output.dir")?;
    Ok((cfg, out))
}

fn require_dir(p: &Path) -> anyhow::Result<()> {
    anyhow::ensure!(p.is_dir(), "image directory {} does not exist", p.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Generate { common } => {
            let (cfg, out) = setup(&common)?;
            commands::generate(&cfg, &out)
        }
        Command::Detect { images, common } => {
            let (cfg, out) = setup(&common)?;
            require_dir(&images)?;
            commands::detect(&cfg, &images, &out)
        }
        Command::Track {
            images,
            common,
            redetect_every,
        } => {
            let (mut cfg, out) = setup(&common)?;
            require_dir(&images)?;
            if let Some(n) = redetect_every {
                cfg.redetect_every = n;
            }
            commands::track(&cfg, &images, &out)
        }
        Command::Simulate {
            common,
            scenario,
            mode,
        } => {
            let (cfg, out) = setup(&common)?;
            commands::simulate(&cfg, scenario, mode, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VISNAV_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::LostFrames(n)) => {
            error!("{n} frame(s) without a target");
            ExitCode::from(3)
        }
        Ok(Outcome::ScenarioFailure(msg)) => {
            error!("{msg}");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
