use std::path::PathBuf;
use std::process::ExitCode;

use axoneme_cli::{config, CliError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "axoneme", version, about = "Motor-row oscillation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config or a manifest from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output prefix; files are written as `<out>.csv` and friends.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key.path=value` override, value parsed as JSON when possible.
    #[arg(long = "set", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one model and write its time series.
    Simulate(Common),
    /// Linear stability, onset and amplitude theory.
    Analyze(Common),
    /// Measured amplitude and frequency over the configured deltas.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Also compare theory, ODE and PDE amplitudes.
        #[arg(long)]
        errors: bool,
    },
    /// Amplitude and frequency as one parameter varies.
    Sensitivity(Common),
    /// N-row run with phase-cluster detection.
    Cluster(Common),
    /// Print the default configuration.
    Params,
}

fn load(c: &Common) -> Result<config::RunConfig, CliError> {
    config::load(c.config.as_deref(), &c.set, c.seed, c.out.as_deref())
}

fn dispatch(cmd: Command) -> Result<Vec<PathBuf>, CliError> {
    match cmd {
        Command::Simulate(c) => axoneme_cli::cmd_simulate(&load(&c)?),
        Command::Analyze(c) => axoneme_cli::cmd_analyze(&load(&c)?),
        Command::Sweep { common, errors } => axoneme_cli::cmd_sweep(&load(&common)?, errors),
        Command::Sensitivity(c) => axoneme_cli::cmd_sensitivity(&load(&c)?),
        Command::Cluster(c) => axoneme_cli::cmd_cluster(&load(&c)?),
        Command::Params => {
            print!("{}", axoneme_cli::cmd_params());
            Ok(Vec::new())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
