//! `treekd` command line: extract, train, build-prompts, predict, eval and
//! preview-prompt over one JSON run config.

pub mod config;
mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use treekd::inference::{EnsembleError, PredictorError};

pub use config::RunConfig;
pub use pipeline::Workspace;

#[derive(Debug, Parser)]
#[command(name = "treekd", version, about = "Tree-guided molecular property prediction")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true, default_value = "treekd.json")]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Functional-group counts for every molecule.
    Extract,
    /// Scaffold split, specialist tree and forest.
    Train,
    /// Training prompts, one random forest rule per molecule.
    BuildPrompts {
        /// Print the first prompt and its target.
        #[arg(long)]
        preview: bool,
    },
    /// Ensemble predictions on the test split.
    Predict,
    /// Metrics for the predictions, or the forest-size table.
    Eval(EvalArgs),
    /// Print one test-split prompt.
    PreviewPrompt {
        /// Position in the test split.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Forest tree whose rule is shown.
        #[arg(long, default_value_t = 0)]
        tree: usize,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Compare forests of two sizes instead of scoring predictions.
    #[arg(long)]
    pub scaling: bool,
    #[arg(long, value_delimiter = ',', default_value = "50,100")]
    pub sizes: Vec<usize>,
    /// Extra `NAME=PATH` datasets for --scaling; the config dataset otherwise.
    #[arg(long = "dataset", value_name = "NAME=PATH")]
    pub datasets: Vec<String>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

/// Exit code for a failed command: backend failures are 3, anything else
/// is treated as bad input.
pub fn exit_code(error: &anyhow::Error) -> i32 {
    let backend = error.chain().any(|cause| {
        cause.is::<PredictorError>() || matches!(cause.downcast_ref::<EnsembleError>(), Some(EnsembleError::Backend(_)))
    });
    if backend {
        EXIT_BACKEND
    } else {
        EXIT_INPUT
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    let ws = Workspace::open(config)?;
    match &cli.command {
        Command::Extract => ws.extract(),
        Command::Train => ws.train(),
        Command::BuildPrompts { preview } => ws.build_prompts(*preview),
        Command::Predict => ws.predict(),
        Command::Eval(args) if args.scaling => ws.eval_scaling(&args.sizes, &args.datasets),
        Command::Eval(_) => ws.eval(),
        Command::PreviewPrompt { index, tree } => ws.preview_prompt(*index, *tree),
    }
}
