//! `semireg run <config> | report <dir> | plot <dir>`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semireg::harness;

#[derive(Parser)]
#[command(name = "semireg", version, about = "Run and inspect semireg experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config; results go under $SEMIREG_RESULTS (default ./results).
    Run { config: PathBuf },
    /// Print the rate table of a results directory.
    Report { dir: PathBuf },
    /// Write log-log data files under <dir>/plot.
    Plot { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => harness::run(&config, &harness::results_root()).map(|out| {
            for r in &out.rows {
                println!("{} {}: fitted {} vs {}", if r.passed { "PASS" } else { "FAIL" }, r.quantity, r.fitted, r.predicted);
            }
            println!("results in {}", out.dir.display());
            if out.all_passed() { 0 } else { 1 }
        }),
        Command::Report { dir } => harness::report(&dir).map(|table| {
            print!("{table}");
            0
        }),
        Command::Plot { dir } => harness::plot(&dir).map(|warnings| {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            0
        }),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}
