//! Command-line front end for the purification pipeline.
//!
//! Each subcommand runs one stage against an output directory of artifact
//! bundles; `full-run` chains them. See the README for the config schema.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{ReportFile, Workspace};
pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "purikit", version, about = "Latent-cluster guided adversarial purification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, value_name = "DIR", env = "PURIKIT_OUT", default_value = "purikit-out")]
    pub out: PathBuf,
    /// Run seed; stage seeds are derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 picks one per core). 1 gives bit-exact reruns.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Dotted overrides, e.g. `net.epochs=20`.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (or load) the train and test splits.
    Synth(Common),
    /// Train the baseline classifier.
    TrainBaseline(Common),
    /// Cluster baseline latents and learn one dictionary per cluster.
    BuildSrd(Common),
    /// Adversarial training with the latent distance penalty.
    TrainRobust(Common),
    /// Craft the attack grid against the baseline on the test split.
    Attack(Common),
    /// Purify a dataset artifact.
    Purify {
        #[command(flatten)]
        common: Common,
        /// Dataset artifact to purify, e.g. `test` or `attack-fgsm-l2-0.08`.
        #[arg(long, default_value = commands::TEST)]
        input: String,
    },
    /// Evaluate clean, attacked and purified accuracy.
    Eval(Common),
    /// Run every stage in order.
    FullRun(Common),
    /// Print the resolved configuration.
    ShowConfig(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Synth(c)
            | Self::TrainBaseline(c)
            | Self::BuildSrd(c)
            | Self::TrainRobust(c)
            | Self::Attack(c)
            | Self::Eval(c)
            | Self::FullRun(c)
            | Self::ShowConfig(c) => c,
            Self::Purify { common, .. } => common,
        }
    }
}

/// Resolves the configuration and runs the command on a pool of
/// `--threads` workers.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let common = cli.command.common();
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = RunConfig::load(common.config.as_deref(), &overrides)?;
    if let Command::ShowConfig(_) = cli.command {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let ws = Workspace::new(&common.out)?;
    pool.install(|| match &cli.command {
        Command::Synth(_) => commands::synth(&cfg, &ws),
        Command::TrainBaseline(_) => commands::cmd_train_baseline(&cfg, &ws),
        Command::BuildSrd(_) => commands::cmd_build_srd(&cfg, &ws),
        Command::TrainRobust(_) => commands::cmd_train_robust(&cfg, &ws),
        Command::Attack(_) => commands::cmd_attack(&cfg, &ws),
        Command::Purify { input, .. } => commands::cmd_purify(&cfg, &ws, input),
        Command::Eval(_) => commands::cmd_eval(&cfg, &ws).map(|_| ()),
        Command::FullRun(_) => commands::cmd_full_run(&cfg, &ws).map(|_| ()),
        Command::ShowConfig(_) => unreachable!(),
    })
}

/// Parses `args` (program name first) and runs.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    execute(&cli)
}
