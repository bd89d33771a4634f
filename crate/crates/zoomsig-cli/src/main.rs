//! `zoomsig`: simulate 2-step zoom-in pipeline logs, analyze the
//! zoom-consistency confidence signal, and route across models.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod analyze;
mod report;
mod route;
mod simulate;
mod util;

#[derive(Parser)]
#[command(name = "zoomsig", version, about = "Zoom-consistency signal toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic pipeline log
    Simulate(simulate::SimulateArgs),
    /// Consistency-vs-correctness analysis of a log
    Analyze(analyze::AnalyzeArgs),
    /// Compare routing strategies between two models
    Route(route::RouteArgs),
    /// Re-render a stored JSON report as markdown
    Report(report::ReportArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            err.print().expect("write clap error");
            std::process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate(args) => simulate::run(args),
        Command::Analyze(args) => analyze::run(args),
        Command::Route(args) => route::run(args),
        Command::Report(args) => report::rerender(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
