//! Command-line front end: argument parsing, run configuration, pipeline
//! stages and raster export.

mod config;
mod export;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{DataPaths, RunConfig};
pub use export::{channel_raster, encode_ppm, merged_raster, EMPTY_COLOR, PALETTE};

use crate::error::Result;
use pipeline::Notes;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "LUCGEN_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "lucgen",
    version,
    about = "Land-use configuration generation for urban communities"
)]
pub struct Args {
    /// JSON run configuration; defaults apply to every omitted field.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the configuration file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic city into <out>/data.
    Synth,
    /// Extract context features and fit the scaler.
    Featurize,
    /// Train the graph autoencoder and embed every community.
    Embed,
    /// Score and label the current plan of every community.
    Label,
    /// Train the adversarial planner and the VAE baseline.
    TrainGan,
    /// Generate plans for the evaluation communities.
    Generate,
    /// Train the scoring forest and score generated plans.
    Score,
    /// Write proportions, rasters, embeddings and the summary report.
    Report,
    /// Run every stage in order, starting with synth.
    All,
    /// Run every stage except synth, using existing datasets.
    Pipeline,
}

impl Command {
    fn stages(self) -> Vec<Command> {
        use Command::*;
        let tail = [Featurize, Label, Embed, TrainGan, Generate, Score, Report];
        match self {
            All => std::iter::once(Synth).chain(tail).collect(),
            Pipeline => tail.to_vec(),
            one => vec![one],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Featurize => "featurize",
            Command::Embed => "embed",
            Command::Label => "label",
            Command::TrainGan => "train-gan",
            Command::Generate => "generate",
            Command::Score => "score",
            Command::Report => "report",
            Command::All => "all",
            Command::Pipeline => "pipeline",
        }
    }
}

/// Runs one stage against a validated configuration.
pub fn run_stage(cfg: &RunConfig, stage: Command) -> Result<Notes> {
    match stage {
        Command::Synth => pipeline::stage_synth(cfg),
        Command::Featurize => pipeline::stage_featurize(cfg),
        Command::Embed => pipeline::stage_embed(cfg),
        Command::Label => pipeline::stage_label(cfg),
        Command::TrainGan => pipeline::stage_train_gan(cfg),
        Command::Generate => pipeline::stage_generate(cfg),
        Command::Score => pipeline::stage_score(cfg),
        Command::Report => pipeline::stage_report(cfg),
        Command::All | Command::Pipeline => {
            let mut notes = Notes::new();
            for s in stage.stages() {
                notes.extend(run_stage(cfg, s)?);
            }
            Ok(notes)
        }
    }
}

/// Resolves the effective configuration from the file and the overrides.
pub fn resolve_config(args: &Args) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

/// Parses `argv`, runs the requested stages and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_threads();
    let cfg = match resolve_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("lucgen: {e}");
            return e.exit_code();
        }
    };
    for stage in args.command.stages() {
        eprintln!("[{}]", stage.name());
        match run_stage(&cfg, stage) {
            Ok(notes) => notes.iter().for_each(|n| eprintln!("  {n}")),
            Err(e) => {
                eprintln!("lucgen {}: {e}", stage.name());
                return e.exit_code();
            }
        }
    }
    0
}
