//! Command-line front end for the retrieval engine.

pub mod commands;
pub mod config;
pub mod csvio;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use clap::{CommandFactory, Parser, Subcommand};

pub use commands::{
    BenchArgs, BuildIndexArgs, EvalArgs, RerankArgs, RobustnessArgs, ScorerArgs, SearchArgs,
    TrainPqArgs,
};

/// Invalid invocation detected after argument parsing (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_REMOTE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "tokenrank",
    version,
    about = "Two-stage image retrieval over compressed visual tokens"
)]
pub struct Cli {
    /// TOML file with per-command defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration before running.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    /// Worker threads for per-query parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train product-quantization codebooks on tokens from dump files.
    TrainPq(TrainPqArgs),
    /// Build a token index from dump files.
    BuildIndex(BuildIndexArgs),
    /// Global-descriptor shortlists for a directory of queries.
    Search(SearchArgs),
    /// Re-rank shortlists with a pair scorer and fuse the scores.
    Rerank(RerankArgs),
    /// mAP@k of ranked lists against relevance judgments.
    Eval(EvalArgs),
    /// Similarity-versus-strength curve for one transform.
    Robustness(RobustnessArgs),
    /// Search plus re-rank latency over a sweep of shortlist sizes.
    Bench(BenchArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::TrainPq(_) => "train-pq",
            Command::BuildIndex(_) => "build-index",
            Command::Search(_) => "search",
            Command::Rerank(_) => "rerank",
            Command::Eval(_) => "eval",
            Command::Robustness(_) => "robustness",
            Command::Bench(_) => "bench",
        }
    }
}

/// Flag ids accepted by subcommand `name`, which are also its config keys.
pub fn known_keys(name: &str) -> BTreeSet<String> {
    let cmd = Cli::command();
    cmd.find_subcommand(name)
        .map(|sub| {
            sub.get_arguments()
                .map(|a| a.get_id().to_string())
                .filter(|id| !["config", "verbose", "jobs", "help"].contains(&id.as_str()))
                .collect()
        })
        .unwrap_or_default()
}

/// Exit code for a failed run: usage problems 1, remote-service failures 3,
/// everything else (bad data, I/O) 2.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<tokenrank::Error>() {
            return if e.is_remote() {
                EXIT_REMOTE
            } else {
                EXIT_DATA
            };
        }
    }
    EXIT_DATA
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let file = cli
        .config
        .as_deref()
        .map(config::ConfigFile::load)
        .transpose()?;
    let jobs = cli.jobs.or(file.as_ref().and_then(|f| f.jobs));
    if let Some(n) = jobs {
        if n == 0 {
            return Err(UsageError("--jobs must be positive".into()).into());
        }
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let name = cli.command.name();
    let known = known_keys(name);
    let file = file.as_ref();
    macro_rules! dispatch {
        ($args:expr, $f:path) => {{
            let args = config::resolve($args, file, name, &known)?;
            if cli.verbose {
                eprint!("{}", config::render(name, &args, jobs));
            }
            $f(&args)
        }};
    }
    match cli.command {
        Command::TrainPq(a) => dispatch!(a, commands::train_pq),
        Command::BuildIndex(a) => dispatch!(a, commands::build_index),
        Command::Search(a) => dispatch!(a, commands::search),
        Command::Rerank(a) => dispatch!(a, commands::rerank),
        Command::Eval(a) => dispatch!(a, commands::eval),
        Command::Robustness(a) => dispatch!(a, commands::robustness),
        Command::Bench(a) => dispatch!(a, commands::bench),
    }
}
