//! `hlmrf`: inference, learning, synthetic data, oracle cross-checks and
//! benchmarks from the command line.
//!
//! Exit codes: 0 when the run converged (or every check passed), 1 on usage,
//! IO or data errors and failed checks, 2 when a budget ran out first.

mod bench;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hlmrf::synthetic::SyntheticKind;

use config::{ExperimentConfig, LearnFlags, SolverFlags};

#[derive(Parser, Debug)]
#[command(name = "hlmrf", version, about = "Hinge-loss MRF inference and learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags every experiment command accepts.
#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// JSON file whose keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    output: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// MAP inference on a model.
    Infer {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Samples file; the chosen sample supplies inputs and head features.
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        sample_index: usize,
        #[arg(long)]
        head: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        solver: SolverFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Weight learning from labeled samples.
    Learn {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        head: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        solver: SolverFlags,
        #[command(flatten)]
        learn: LearnFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Writes a synthetic model and its samples.
    GenSynthetic {
        /// collective-classification, chain or many-components.
        #[arg(long)]
        kind: SyntheticKind,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, short, default_value = "out")]
        output: PathBuf,
    },
    /// Compares the dual solver with exact enumeration on random instances.
    OracleCheck {
        /// Check this model instead of the random suite.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = hlmrf::synthetic::ORACLE_SUITE_SEED)]
        seed: u64,
        #[command(flatten)]
        solver: SolverFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Warm-start, epsilon and variant benchmarks.
    Bench {
        #[arg(long)]
        seed: u64,
        /// Nodes in the collective-classification instance.
        #[arg(long, default_value_t = 20)]
        size: usize,
        /// Length of the weight perturbation schedule.
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[command(flatten)]
        solver: SolverFlags,
        #[command(flatten)]
        common: Common,
    },
}

fn experiment(
    common: &Common,
    seed: u64,
    build: impl FnOnce(&mut ExperimentConfig),
) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig {
        seed,
        output: common.output.clone(),
        ..ExperimentConfig::default()
    };
    build(&mut cfg);
    if let Some(file) = &common.config {
        cfg = cfg.overlay_file(file)?;
    }
    // one seed drives everything
    cfg.inference.solver.seed = cfg.seed;
    cfg.learn.seed = cfg.seed;
    cfg.learn.inference.solver.seed = cfg.seed;
    cfg.check_files()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<commands::Outcome> {
    match cli.command {
        Command::Infer { model, samples, sample_index, head, seed, solver, common } => {
            let cfg = experiment(&common, seed, |c| {
                c.model = model;
                c.samples = samples;
                c.head = head;
                solver.apply(&mut c.inference);
            })?;
            commands::infer(&cfg, sample_index)
        }
        Command::Learn { model, samples, head, seed, solver, learn, common } => {
            let cfg = experiment(&common, seed, |c| {
                c.model = model;
                c.samples = samples;
                c.head = head;
                solver.apply(&mut c.learn.inference);
                learn.apply(&mut c.learn);
            })?;
            commands::learn(&cfg)
        }
        Command::GenSynthetic { kind, size, seed, output } => commands::gen_synthetic(kind, size, seed, &output),
        Command::OracleCheck { model, count, seed, solver, common } => {
            let cfg = experiment(&common, seed, |c| {
                c.model = model;
                c.inference.solver.max_epochs = 1_000_000;
                solver.apply(&mut c.inference);
            })?;
            commands::oracle_check(&cfg, count)
        }
        Command::Bench { seed, size, steps, solver, common } => {
            let cfg = experiment(&common, seed, |c| {
                c.inference.workers = 4;
                c.inference.solver.max_epochs = 1_000_000;
                solver.apply(&mut c.inference);
            })?;
            bench::run(&cfg, size, steps)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }
}
