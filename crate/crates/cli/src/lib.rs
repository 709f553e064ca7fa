//! Command-line driver: every subcommand is a thin wrapper over `talkhead-core`.

mod cmd;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

pub use cmd::{
    CurateArgs, EvalArgs, GenerateArgs, RigSynthArgs, TemplateExtractArgs, ToyCorpusArgs, TrainArgs, TrajectoryGenArgs,
};

#[derive(Debug, Parser)]
#[command(
    name = "talkhead",
    version,
    about = "Speech-driven 3D head motion: rigs, training, generation, evaluation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random draw; recorded in output headers.
    #[arg(long, global = true, env = "TALKHEAD_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for the parallel metric and curation paths.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Repeat for more detail (info, debug, trace).
    #[arg(long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a procedural head rig (and its region masks).
    RigSynth(RigSynthArgs),
    /// Build a curation plan and package accepted parameter tracks.
    Curate(CurateArgs),
    /// Train a motion model from a manifest.
    Train(TrainArgs),
    /// Generate a parameter sequence from audio features.
    Generate(GenerateArgs),
    /// Compare a predicted sequence with ground truth.
    Eval(EvalArgs),
    /// Average expression parameters of labelled sessions into a template file.
    TemplateExtract(TemplateExtractArgs),
    /// Write a head-pose offset table from a preset.
    TrajectoryGen(TrajectoryGenArgs),
    /// Write the synthetic training corpus and its manifest.
    ToyCorpus(ToyCorpusArgs),
}

impl GlobalArgs {
    pub fn log_level(&self) -> log::LevelFilter {
        if self.quiet {
            return log::LevelFilter::Error;
        }
        match self.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            2 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    }
}

/// Producer record stored in output headers. Holds no paths of outputs and no
/// timestamps, so reruns with the same inputs produce identical bytes.
pub(crate) fn provenance(command: &str, seed: Option<u64>, config: impl Serialize) -> Result<Value> {
    Ok(json!({
        "producer": format!("talkhead {}", env!("CARGO_PKG_VERSION")),
        "command": command,
        "seed": seed,
        "config": serde_json::to_value(config).context("serializing run config")?,
    }))
}

pub(crate) fn ensure_parent(path: &std::path::Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

pub(crate) fn display(p: &std::path::Path) -> String {
    p.display().to_string()
}

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.jobs.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    let g = cli.global;
    pool.install(|| match cli.command {
        Command::RigSynth(a) => cmd::rig_synth(&g, a),
        Command::Curate(a) => cmd::curate(&g, a),
        Command::Train(a) => cmd::train(&g, a),
        Command::Generate(a) => cmd::generate(&g, a),
        Command::Eval(a) => cmd::eval(&g, a),
        Command::TemplateExtract(a) => cmd::template_extract(&g, a),
        Command::TrajectoryGen(a) => cmd::trajectory_gen(&g, a),
        Command::ToyCorpus(a) => cmd::toy_corpus(&g, a),
    })
}

/// Single-line rendering of an error and its causes.
pub fn error_line(err: &anyhow::Error) -> String {
    format!("{err:#}").replace(['\n', '\r'], " ")
}
