//! The `consteval` command line: generate a suite of dialogues, serve it to
//! raters, simulate or analyse the resulting record log.
//!
//! Each command is also callable as a function so that pipelines can be
//! driven in-process.

pub mod analyze;
pub mod cli;
pub mod config;
pub mod generate;
pub mod serve;
pub mod simulate;

pub use analyze::{cmd_analyze, AnalyzeOptions, AnalyzeReport, ResultsBundle};
pub use cli::{Cli, Command};
pub use generate::{cmd_generate, GenerateOptions, GenerateReport};
pub use serve::{cmd_serve, prepare_serve, run_prepared, PreparedServer, ServeOptions};
pub use simulate::{cmd_simulate, parse_beta, SimulateOptions};

/// Runs a parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let keys = cli.resolved_keys()?;
    match cli.command {
        Command::Generate(_) => {
            cmd_generate(&GenerateOptions::from_keys(keys)?)?;
        }
        Command::Serve(_) => {
            let opts = ServeOptions::from_keys(keys)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(cmd_serve(&opts, async {
                if tokio::signal::ctrl_c().await.is_err() {
                    std::future::pending::<()>().await;
                }
            }))?;
        }
        Command::Analyze(_) => {
            let report = cmd_analyze(&AnalyzeOptions::from_keys(keys)?)?;
            for f in &report.files {
                println!("{}", f.display());
            }
        }
        Command::Simulate(_) => {
            cmd_simulate(&SimulateOptions::from_keys(keys)?)?;
        }
    }
    Ok(())
}
