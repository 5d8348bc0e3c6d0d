pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod pipeline;

use args::{Cli, Command};
use error::CliResult;

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Fit(a) => commands::cmd_fit(a),
        Command::Placebo(a) => commands::cmd_placebo(a),
        Command::Loo(a) => commands::cmd_loo(a),
        Command::SpecGrid(a) => commands::cmd_spec_grid(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Report(a) => commands::cmd_report(a),
    }
}
