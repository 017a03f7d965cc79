use std::path::PathBuf;
use std::process::ExitCode;

use accordion::commands::{self, Environment, TrainOptions};
use accordion::config::{RunConfig, SplitName};
use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "accordion", version, about = "Genetic-algorithm training of CNN weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory that relative dataset paths resolve against (default: $DATASET_ROOT).
    #[arg(long)]
    dataset_root: Option<PathBuf>,
    /// Evaluation threads; 0 uses every CPU.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl Common {
    fn load(&self) -> anyhow::Result<(RunConfig, Environment)> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok((cfg, Environment { dataset_root: self.dataset_root.clone(), workers: self.workers }))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for SplitName {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitName::Train,
            SplitArg::Validation => SplitName::Validation,
            SplitArg::Test => SplitName::Test,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Create an initial population file to share between runs.
    InitPop {
        #[command(flatten)]
        common: Common,
        /// Population file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scheme or the backprop baseline.
    Train {
        #[command(flatten)]
        common: Common,
        /// Run directory for metrics, checkpoints and the final population.
        #[arg(long)]
        out: PathBuf,
        /// Initial population file (overrides the config).
        #[arg(long)]
        population: Option<PathBuf>,
        /// Continue from a checkpoint file or a run directory's newest one.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Align several runs on log10(evaluations); writes compare.csv and compare.svg.
    Compare {
        /// Run directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a stored member on a dataset split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Population or checkpoint file.
        #[arg(long)]
        population: PathBuf,
        /// Member id; defaults to the fittest evaluated member.
        #[arg(long)]
        member: Option<u64>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::InitPop { common, out } => {
            let (cfg, _) = common.load()?;
            let file = commands::init_pop(&cfg, &out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!(
                "wrote {} `{}` networks to {}",
                file.state.population.len(),
                file.spec.name,
                out.display()
            );
        }
        Command::Train { common, out, population, resume } => {
            let (cfg, env) = common.load()?;
            let history = commands::train(&cfg, &env, &TrainOptions { out: out.clone(), population, resume })?;
            let last = history.last().expect("train records generation 0");
            eprintln!(
                "generation {}: best accuracy {:.4} after {} evaluations; metrics in {}",
                last.generation,
                last.best_fitness,
                last.evaluations_so_far,
                out.display()
            );
        }
        Command::Compare { runs, out } => {
            let series = commands::compare(&runs, &out)?;
            eprintln!("compared {} runs into {}", series.len(), out.display());
        }
        Command::Eval { common, population, member, split } => {
            let (cfg, env) = common.load()?;
            let report = commands::eval(&cfg, &env, &population, member, split.into())?;
            println!("{}", serde_json::to_string(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
