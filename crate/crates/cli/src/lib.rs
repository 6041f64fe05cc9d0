//! `cothought run | replay | inspect`.
//!
//! Exit codes: 0 converged (and successful replay/inspect), 2 budget
//! exhausted, 3 deadlock, 1 any other error, 64 usage error.

mod args;
mod commands;
mod spec;

use std::io::Write;

use clap::Parser;

pub use args::{BackendKind, Cli, Command, InspectArgs, ModeArg, ReplayArgs, RunArgs, Shared};
pub use commands::{
    cmd_inspect, cmd_replay, cmd_run, exit_code, EXIT_BUDGET, EXIT_CONVERGED, EXIT_DEADLOCK,
    EXIT_ERROR, EXIT_USAGE,
};
pub use spec::{resolve_run_spec, CliError, ConfigFile, LoopOverrides, RemoteSettings, RunSpec, Target};

/// Parses `args` (including the program name) and runs the command.
pub fn main_with(args: Vec<String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    return EXIT_CONVERGED;
                }
                _ => EXIT_USAGE,
            };
            let _ = write!(stderr, "{e}");
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, stdout),
        Command::Replay(a) => cmd_replay(a, stdout),
        Command::Inspect(a) => cmd_inspect(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "usage error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Failed(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_ERROR
        }
    }
}
