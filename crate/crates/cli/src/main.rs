mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use marrow_core::ErrorKind;

use args::Cli;

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Training => 4,
        ErrorKind::Io => 5,
    }
}

/// The first library error in the chain decides the class; bare I/O
/// errors count as I/O and anything else as a usage problem.
fn classify(err: &anyhow::Error) -> ErrorKind {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<marrow_core::Error>() {
            return e.kind();
        }
        if cause.is::<std::io::Error>() {
            return ErrorKind::Io;
        }
    }
    ErrorKind::Config
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = classify(&err);
            let message = format!("{err:#}").replace('\n', " ");
            eprintln!("error[{}]: {message}", kind.as_str());
            ExitCode::from(exit_code(kind))
        }
    }
}
