use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cimbs::cli::{cmd_gen_graph, cmd_moments, cmd_oracle, cmd_solve};
use cimbs::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "cimbs",
    about = "Continuous influence maximization with budget saving: solvers, diagnostics, and verification oracles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (flat key=value).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: hardware parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Write the CSV output here in addition to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured solve sweep and emit a result-row CSV.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Write 0.000 in the runtime column (byte-stable output).
        #[arg(long)]
        redact_timing: bool,
    },
    /// Sample RR sets and report size moments and relaxation factors.
    Moments {
        #[command(flatten)]
        common: Common,
        /// Number of RR sets to sample.
        #[arg(long, default_value_t = 10_000)]
        count: u64,
    },
    /// Run the built-in verification oracles; nonzero exit on failure.
    Oracle {
        /// Master seed for the oracle randomness.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Worker threads (default: hardware parallelism).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Generate the configured synthetic graph as an edge list.
    GenGraph {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, cimbs::Error> {
    let mut config = RunConfig::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> T {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder.build().expect("thread pool");
    pool.install(job)
}

fn write_out(path: &Option<PathBuf>, content: &str) -> std::io::Result<()> {
    if let Some(path) = path {
        std::fs::write(path, content)?;
    }
    Ok(())
}

fn run() -> Result<ExitCode, cimbs::Error> {
    match Cli::parse().command {
        Command::Solve {
            common,
            redact_timing,
        } => {
            let config = load_config(&common)?;
            let csv = in_pool(common.workers, || cmd_solve(&config, redact_timing))?;
            print!("{csv}");
            write_out(&common.out, &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Moments { common, count } => {
            let config = load_config(&common)?;
            let (text, csv) = in_pool(common.workers, || cmd_moments(&config, count))?;
            print!("{text}");
            write_out(&common.out, &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { seed, workers } => {
            let (report, all_pass) = in_pool(workers, || cmd_oracle(seed))?;
            print!("{report}");
            Ok(if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::GenGraph { common } => {
            let config = load_config(&common)?;
            let text = cmd_gen_graph(&config)?;
            match &common.out {
                Some(path) => std::fs::write(path, &text)?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
