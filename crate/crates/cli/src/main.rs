use std::process::ExitCode;

use clap::Parser;
use instrumentnet_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(None, &anyhow::Error::from(e)),
    };
    match cli.resolve().and_then(|config| run(&config)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(Some(cli.command), &e),
    }
}

/// One JSON object on one line of stderr.
fn fail(command: Option<instrumentnet_cli::Command>, err: &anyhow::Error) -> ExitCode {
    let message = format!("{err:#}").replace('\n', " ");
    let line = serde_json::json!({
        "status": "error",
        "command": command.map(|c| c.to_string()),
        "error": message,
    });
    eprintln!("{line}");
    ExitCode::FAILURE
}
