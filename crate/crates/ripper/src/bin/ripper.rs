//! Command-line front end for the model-ripping pipeline. Each subcommand
//! runs one stage against the artifacts in the output directory; `report`
//! pretty-prints the final comparison.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use ripper::config::ExperimentConfig;
use ripper::distill::DistillMode;
use ripper::pipeline::{artifact_paths, compare_report, run_stage, ExperimentReport, Stage};
use ripper::Error;

#[derive(Parser)]
#[command(
    name = "ripper",
    version,
    about = "Steal a black-box classifier: evolve generator samples the oracle \
             is confident about, then distill its answers into a student model."
)]
struct Cli {
    /// Experiment configuration file; omitted keys use the built-in defaults
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the global seed from the config
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Override the output directory from the config
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Zero wall-clock timings and force sequential evaluation so reruns
    /// produce bitwise-identical artifacts
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the true and proxy datasets and the held-out test split
    Data,
    /// Train the victim classifier on the true training split
    Teacher,
    /// Train the latent generator on the proxy dataset
    Generator,
    /// Evolve oracle-confident samples and distill them into a student
    Rip,
    /// Train a comparison student without the evolutionary search
    Baseline {
        /// knockoff: label raw proxy data; gen-random: label unevolved
        /// generator samples
        #[arg(long, value_enum)]
        mode: BaselineMode,
    },
    /// Score the teacher and all trained students on the true test split
    Evaluate,
    /// Print the comparison table from the last evaluation
    Report,
}

#[derive(Debug, Copy, Clone, ValueEnum)]
enum BaselineMode {
    Knockoff,
    GenRandom,
}

impl From<BaselineMode> for DistillMode {
    fn from(mode: BaselineMode) -> DistillMode {
        match mode {
            BaselineMode::Knockoff => DistillMode::Knockoff,
            BaselineMode::GenRandom => DistillMode::GenRandom,
        }
    }
}

fn run(cli: Cli) -> ripper::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.display().to_string();
    }
    if cli.deterministic {
        cfg.deterministic = true;
    }

    match cli.command {
        Command::Data => run_stage(&cfg, Stage::Data),
        Command::Teacher => run_stage(&cfg, Stage::Teacher),
        Command::Generator => run_stage(&cfg, Stage::Generator),
        Command::Rip => run_stage(&cfg, Stage::Rip),
        Command::Baseline { mode } => run_stage(&cfg, Stage::Baseline(mode.into())),
        Command::Evaluate => run_stage(&cfg, Stage::Evaluate),
        Command::Report => {
            let path = artifact_paths(&cfg).experiment_report;
            if !path.exists() {
                return Err(Error::StageOrder {
                    stage: "report".to_string(),
                    missing: path,
                    hint: "evaluate".to_string(),
                });
            }
            let report = ExperimentReport::read_json(&path)?;
            print!("{}", compare_report(&report));
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
