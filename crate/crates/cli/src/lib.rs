//! Command-line runner for `recurpred-core`: config merge, CSV output and
//! the `predict`, `evaluate`, `certify`, `adversary` and `martingale`
//! subcommands.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgMatches, Command};

pub mod commands;
pub mod config;
pub mod report;

pub use config::{load_config, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Capability(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 1,
            CliError::Capability(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

pub const SUBCOMMANDS: [(&str, &str); 5] = [
    ("predict", "forward prediction from a data file, one value per line"),
    ("evaluate", "Cesàro error averages over seeds, written as CSV"),
    ("certify", "divergence certificates for an odometer schedule"),
    ("adversary", "build a schedule against a baseline forecaster and certify it"),
    ("martingale", "running averages of a martingale difference sequence"),
];

fn flag_name(key: &str) -> &str {
    if key == "horizon" {
        "T"
    } else {
        key
    }
}

fn command() -> Command {
    let mut cmd = Command::new("recurpred")
        .about("Pattern-recurrence prediction experiments")
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("key = value file applied before flags"),
        );
    for key in config::KEYS {
        let mut arg = Arg::new(*key).long(flag_name(key)).global(true).value_name("VALUE");
        if *key == "horizon" {
            arg = arg.visible_alias("horizon");
        }
        cmd = cmd.arg(arg);
    }
    for (name, about) in SUBCOMMANDS {
        cmd = cmd.subcommand(Command::new(name).about(about));
    }
    cmd
}

fn merged_config(matches: &ArgMatches) -> Result<RunConfig, CliError> {
    let mut config = match matches.get_one::<String>("config") {
        Some(path) => load_config(Path::new(path))?,
        None => RunConfig::default(),
    };
    for key in config::KEYS {
        if let Some(value) = matches.get_one::<String>(key) {
            config.set(key, value).map_err(|e| CliError::Input(format!("--{}: {e}", flag_name(key))))?;
        }
    }
    Ok(config)
}

fn dispatch(args: Vec<OsString>) -> Result<(), CliError> {
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let config = merged_config(sub)?;
    print!("{}", config.render(name));
    match name {
        "predict" => commands::predict(&config),
        "evaluate" => commands::evaluate(&config),
        "certify" => commands::certify(&config),
        "adversary" => commands::adversary(&config),
        "martingale" => commands::martingale(&config),
        other => Err(CliError::Usage(format!("unknown subcommand {other}"))),
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    match dispatch(args.into_iter().map(Into::into).collect()) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(text) => eprint!("{text}"),
                other => eprintln!("error: {other}"),
            }
            e.exit_code()
        }
    }
}
