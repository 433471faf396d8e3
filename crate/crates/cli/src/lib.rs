//! Pipeline commands behind the `raylaplace` binary and the render service.

pub mod args;
pub mod commands;
pub mod serve;
pub mod synth;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use args::{Cli, Command};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "RAYLAPLACE_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] raylaplace::Error),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
        }
    }
}

macro_rules! from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}
from_core!(
    raylaplace::FieldError,
    raylaplace::RenderError,
    raylaplace::UqError,
    raylaplace::EvalError,
    raylaplace::SceneIoError
);

/// The line printed on failure: `error[category]: message`.
pub fn error_line(e: &CliError) -> String {
    format!("error[{}]: {}", e.category(), e)
}

/// Reads the thread cap from the environment; `None` when unset.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
    }
}

/// Absolute form of `path`, which must exist.
pub fn input_path(path: &Path) -> Result<PathBuf, CliError> {
    path.canonicalize()
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Absolute form of an output path; it need not exist yet.
pub fn output_path(path: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct Echo<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    threads: usize,
    config: &'a T,
}

/// Writes the resolved configuration of a run next to its artifacts.
pub fn write_echo<T: Serialize>(path: &Path, command: &str, config: &T) -> Result<(), CliError> {
    let echo = Echo {
        command,
        version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        config,
    };
    let text = serde_json::to_string_pretty(&echo).expect("config serializes");
    raylaplace::io::atomic_write(path, text.as_bytes())?;
    Ok(())
}

/// `<path>.config.json`.
pub fn echo_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Uq(a) => commands::uq(a),
        Command::Render(a) => commands::render(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Serve(a) => serve::run(a),
    }
}
