use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use packetscat_cli::{run_with_threads, validate_file, CliError};

#[derive(Parser)]
#[command(name = "packetscat", version, about = "Wave-packet corrections to 2 -> 2 scattering")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every observable requested by the config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config without computing anything.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(1);
    }
    match cli.command {
        Command::Validate { config } => {
            let violations = validate_file(&config);
            for v in &violations {
                println!("{v}");
            }
            ExitCode::from(if violations.is_empty() { 0 } else { 1 })
        }
        Command::Run { config, out } => match run_with_threads(&config, &out, cli.threads) {
            Ok(report) => {
                println!("ok: {} bins, report in {}", report.counts.bins, out.join("report.json").display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                match &e {
                    CliError::Config(violations) => {
                        for v in violations {
                            eprintln!("config error: {v}");
                        }
                    }
                    CliError::Numerical(report) => {
                        for d in &report.diagnostics {
                            eprintln!("numerical failure [{}] {}: {}", d.stage, d.kind, d.message);
                        }
                    }
                    CliError::Io(err) => eprintln!("i/o error: {err}"),
                }
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
