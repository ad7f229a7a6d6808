use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sadi::experiment::{diagnose, run_experiment, validate_config, ExperimentConfig};
use sadi::Error;

#[derive(Parser)]
#[command(name = "sadi", version, about = "Stochastic approximation experiments and occupation-measure diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config's `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds (overrides the config's `seeds`).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check a configuration against the convergence assumptions.
    Validate { config: PathBuf },
    /// Recompute the diagnostics of a saved checkpoint.
    Diagnose { checkpoint: PathBuf },
}

const EXIT_INVALID: u8 = 1;
const EXIT_ESCAPED: u8 = 2;
const EXIT_IO: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(exit_code(&e))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let v = validate_config(&cfg);
            if v.is_empty() {
                println!("ok");
                ExitCode::SUCCESS
            } else {
                for line in v {
                    println!("{line}");
                }
                ExitCode::from(EXIT_INVALID)
            }
        }
        Command::Run { config, out, seeds, jobs } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            let out = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"));
            match run_experiment(&cfg, &out, jobs) {
                Ok(report) => {
                    for r in &report.runs {
                        println!("seed {}: {:?}, {} steps", r.seed, r.status, r.iterations_completed);
                    }
                    println!("bounded fraction: {}", report.bounded_fraction);
                    println!("artifacts: {}", out.join(&cfg.name).display());
                    if cfg.strict && report.any_escaped() {
                        eprintln!("error: at least one run escaped the guard radius");
                        return ExitCode::from(EXIT_ESCAPED);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(exit_code(&e))
                }
            }
        }
        Command::Diagnose { checkpoint } => match diagnose(&checkpoint) {
            Ok(rep) => {
                println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        },
    }
}
