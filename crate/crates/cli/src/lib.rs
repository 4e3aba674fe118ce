//! Library surface of the `bacalarm` binary; the CLI verbs live here so
//! integration tests can drive them directly.

pub mod cli;
pub mod config;
pub mod errors;
pub mod pipeline;
pub mod util;
pub mod verbs;

use clap::error::ErrorKind;
use clap::Parser;
use std::ffi::OsString;

/// Parses `argv` and runs the selected verb, returning the process exit
/// code: 0 success, 2 input, 3 connectivity, 4 degenerate data, 5 schema
/// mismatch, 64 usage.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match cli::Cli::try_parse_from(argv) {
        Ok(parsed) => parsed,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => errors::EXIT_SUCCESS,
                _ => errors::EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(parsed) {
        Ok(()) => errors::EXIT_SUCCESS,
        Err(e) => {
            eprintln!("bacalarm: {e}");
            e.exit_code()
        }
    }
}

pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

fn execute(parsed: cli::Cli) -> Result<(), errors::CliError> {
    let config = config::PipelineConfig::load(parsed.config.as_deref())?;
    let ctx = verbs::Ctx { config, seed: parsed.seed, offline: parsed.offline };
    match &parsed.command {
        cli::Command::Mine(args) => verbs::cmd_mine(&ctx, args),
        cli::Command::Simulate(args) => verbs::cmd_simulate(&ctx, args),
        cli::Command::Featurize(args) => verbs::cmd_featurize(&ctx, args),
        cli::Command::Train(args) => verbs::cmd_train(&ctx, args),
        cli::Command::Detect(args) => verbs::cmd_detect(&ctx, args),
        cli::Command::Eval(args) => verbs::cmd_eval(&ctx, args),
        cli::Command::Report(args) => verbs::cmd_report(&ctx, args),
    }
}
