use std::process::ExitCode;

use clap::Parser;
use survstack_cli::Cli;

fn main() -> ExitCode {
    let args: Vec<_> = std::env::args_os().collect();
    let level = match Cli::try_parse_from(&args) {
        Ok(cli) if cli.quiet => "error",
        Ok(cli) if cli.verbose >= 2 => "debug",
        Ok(cli) if cli.verbose == 1 => "info",
        _ => "warn",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let code = std::panic::catch_unwind(|| {
        let stdout = std::io::stdout();
        let mut out = stdout.lock();
        survstack_cli::run(&args, &mut out)
    })
    .unwrap_or(1);
    ExitCode::from(code as u8)
}
