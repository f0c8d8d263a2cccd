use std::process::ExitCode;

use clap::Parser;

use qrelax_cli::{execute, Cli, ERROR_EXIT};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(ERROR_EXIT);
        }
    }
    match cli.into_config().and_then(|cfg| execute(&cfg)) {
        Ok(status) => ExitCode::from(status.exit_code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ERROR_EXIT)
        }
    }
}
