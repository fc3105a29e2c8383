//! `sdha`: runs ensembles, order studies and structure checks from config files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sdha_cli::commands::{self, TableauKind};

#[derive(Debug, Parser)]
#[command(name = "sdha", version, about = "Stochastic variational integrators: experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Sprk,
    Wrk,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo ensemble and write mean/sem time series.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the symplecticity conditions of a tableau file.
    CheckTableau {
        file: PathBuf,
        /// Defaults to detection from the block labels.
        #[arg(long, value_enum)]
        kind: Option<Kind>,
    },
    /// Estimate a mean-square or weak convergence order.
    Order {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a structure check on one model and method.
    Structure {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out } => commands::run(config, out.as_deref()),
        Command::CheckTableau { file, kind } => commands::check_tableau(
            file,
            kind.map(|k| match k {
                Kind::Sprk => TableauKind::Sprk,
                Kind::Wrk => TableauKind::Wrk,
            }),
        ),
        Command::Order { config, out } => commands::order(config, out.as_deref()),
        Command::Structure { config } => commands::structure(config),
    };
    match result {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
