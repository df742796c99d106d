use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod study;

#[derive(Parser)]
#[command(name = "bsvd", version, about = "Bayesian SVD with structured orthonormal bases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from the `simulation` section of a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the sampler on a data matrix.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        coords_u: PathBuf,
        #[arg(long)]
        coords_v: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `nm × p` covariate matrix, rows ordered `s + n·t`.
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Subtract the grand mean of the data before fitting.
        #[arg(long)]
        center: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write wall-clock timings (not reproducible between runs).
        #[arg(long)]
        timing: bool,
    },
    /// Posterior summaries of a chain, with coverage and RMSE against a truth file.
    Summarize {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Compare a chain with the classical truncated SVD of the data.
    Compare {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Subtract the grand mean of the data first (match `fit --center`).
        #[arg(long)]
        center: bool,
    },
    /// Run a replicated simulation study. Worker threads come from `BSVD_WORKERS`.
    Study {
        #[arg(long, value_enum)]
        name: StudyName,
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
        /// Override the number of replicates of the chosen scale.
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StudyName {
    VariableLength,
    Rank,
    Covariates,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scale {
    Desk,
    Paper,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed } => commands::simulate(&config, &out, seed),
        Command::Fit { data, coords_u, coords_v, config, out, covariates, center, seed, timing } => {
            commands::fit(&commands::FitArgs {
                data,
                coords_u,
                coords_v,
                config,
                out,
                covariates,
                center,
                seed,
                timing,
            })
        }
        Command::Summarize { chain, out, level, truth } => commands::summarize(&chain, &out, level, truth.as_deref()),
        Command::Compare { chain, data, out, level, center } => commands::compare(&chain, &data, &out, level, center),
        Command::Study { name, scale, replicates, out } => {
            let scale = match scale {
                Scale::Desk => bsvd::study::StudyScale::Desk,
                Scale::Paper => bsvd::study::StudyScale::Paper,
            };
            let mut preset = scale.preset();
            if let Some(r) = replicates {
                if r == 0 {
                    return Err(commands::UsageError("--replicates must be at least 1".into()).into());
                }
                preset.replicates = r;
            }
            let run = study::Run { scale, preset, workers: bsvd::study::workers_from_env() };
            match name {
                StudyName::VariableLength => study::variable_length(&run, &out),
                StudyName::Rank => study::rank(&run, &out),
                StudyName::Covariates => study::covariates(&run, &out),
            }
        }
    }
}

/// Bad input is a usage error (exit 2); anything else, such as a numerical
/// abort in the sampler, exits with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    use bsvd::error::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::Input(_) | Error::Config(_) | Error::Parse { .. } | Error::Io { .. }) => 2,
        _ if err.downcast_ref::<commands::UsageError>().is_some() => 2,
        _ => 1,
    }
}

/// The error chain joined with `: `, skipping causes already quoted by the
/// message above them.
fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
