use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kac_cli::{run, ExperimentConfig};

#[derive(Parser)]
#[command(name = "kac", version, about = "Coupled Kac particle system experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the number of replicas.
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Parse and validate a config file, then print the resolved settings.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    ExperimentConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                println!("{}", serde_json::to_string_pretty(&cfg).expect("serializable"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("config error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run { config, seed, out, replicas } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(2);
                }
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.output = out.unwrap_or(cfg.output);
            cfg.replicas = replicas.unwrap_or(cfg.replicas);
            match run(&cfg) {
                Ok(summary) => {
                    for (name, ok) in &summary.assertions {
                        println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
                    }
                    if summary.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
