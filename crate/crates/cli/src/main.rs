//! `cerebra`: runs the pipeline stages over files in one output directory.

mod config;
mod stages;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::PipelineConfig;

#[derive(Parser)]
#[command(name = "cerebra", version, about = "Context-dependent word meaning from sentence images")]
struct Cli {
    /// TOML pipeline config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for ensemble runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restricts per-subject stages to one subject.
    #[arg(long, global = true)]
    subject: Option<String>,
    /// Context measure used for fitting (1, 2 or 3).
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=3))]
    approach: Option<u8>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic lexicon, corpus, catalog and subject images.
    GenData,
    /// Run one pipeline stage, or `all` of them in order.
    Run {
        #[arg(value_enum)]
        stage: Stage,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    /// Per-word images averaged over the sentences containing the word.
    Synth,
    /// Train one network per subject and seed.
    Train,
    /// Adapt word vectors per sentence with frozen weights.
    Contextualize,
    /// Ensemble means and per-attribute change significance.
    Analyze,
    /// Context-effect measures for all three approaches.
    Measures,
    /// Select stimuli and deal questionnaires.
    SurveyGen,
    /// Validate (or simulate) responses and compute consensus.
    Ingest,
    /// Boundary fits for the model and the chance baseline.
    Fit,
    /// Summary tables as JSON and text.
    Report,
    /// Every stage above, in order.
    All,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_possible_value().expect("no skipped variants");
        f.write_str(v.get_name())
    }
}

/// A stage input that is not on disk.
#[derive(Debug)]
pub struct MissingArtifact {
    pub stage: Stage,
    pub path: PathBuf,
}

impl fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: missing input {}", self.stage, self.path.display())
    }
}

impl std::error::Error for MissingArtifact {}

/// A computed result that violates a pipeline invariant.
#[derive(Debug)]
pub struct InvariantFailure(pub String);

impl fmt::Display for InvariantFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invariant violated: {}", self.0)
    }
}

impl std::error::Error for InvariantFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<MissingArtifact>() {
            return 2;
        }
        if cause.is::<InvariantFailure>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<cerebra_core::Error>() {
            return if matches!(e, cerebra_core::Error::Io { .. }) { 1 } else { 3 };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(a) = cli.approach {
        cfg.approach = a.try_into()?;
    }
    if let Ok(dir) = std::env::var("CEREBRA_KIT_OUT") {
        if !dir.is_empty() {
            cfg.out_dir = dir.into();
        }
    }
    cfg.validate()?;
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global()?;
    }
    let ctx = stages::Context::new(cfg, cli.subject);
    match cli.command {
        Command::GenData => stages::gen_data(&ctx),
        Command::Run { stage } => stages::run_stage(&ctx, stage),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
