//! `deltamass` command line.

mod commands;
mod config;
mod output;
mod verify;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{RunConfig, Settings};
use crate::output::OutputDir;

#[derive(Parser)]
#[command(name = "deltamass", version, about = "Δ-mass of surfaces: Robin constants, minimizers, certificates")]
struct Cli {
    /// TOML file with defaults for any flag; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More logging on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SurfaceKind {
    FlatTorus,
    Sphere,
    Mesh,
}

impl SurfaceKind {
    fn name(self) -> &'static str {
        match self {
            Self::FlatTorus => "flat-torus",
            Self::Sphere => "sphere",
            Self::Mesh => "mesh",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Δ-mass of `e^φ g` for a base surface.
    Mass { surface: SurfaceKind },
    /// Minimize the Δ-mass in the conformal class (genus ≥ 1).
    Minimize { surface: SurfaceKind },
    /// Robin and curvature fields of `e^φ g`.
    Robin { surface: SurfaceKind },
    /// Log-HLS and Onofri deficits at a minimizer.
    CheckInequalities,
    /// Run the invariant suites.
    Verify {
        /// Also cross-check the config hash of a finished run directory.
        #[arg(long)]
        record: Option<PathBuf>,
    },
}

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Code {
    Ok = 0,
    Invalid = 2,
    Accuracy = 3,
    Certification = 4,
    Solver = 5,
}

/// An error with a fixed exit code.
#[derive(Debug)]
pub struct Failure {
    code: Code,
    message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn fail(code: Code, message: impl Into<String>) -> anyhow::Error {
    Failure { code, message: message.into() }.into()
}

/// Writes a payload to stdout. A closed pipe is not an error.
pub fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn core_code(e: &deltamass::Error) -> Code {
    use deltamass::Error as E;
    match e {
        E::Accuracy { .. } => Code::Accuracy,
        E::Singular(_) | E::LinearSolver { .. } => Code::Solver,
        _ => Code::Invalid,
    }
}

/// Exit code for an error: the first typed cause wins; anything else is
/// bad input.
fn classify(e: &anyhow::Error) -> Code {
    for cause in e.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.code;
        }
        if let Some(c) = cause.downcast_ref::<deltamass::Error>() {
            return core_code(c);
        }
    }
    Code::Invalid
}

fn run(cli: Cli) -> Result<Code> {
    let file = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let settings = cli.settings.over(&file);
    if settings.repro.unwrap_or(false) {
        rayon::ThreadPoolBuilder::new().num_threads(1).build_global()?;
        log::info!("reproducibility mode: one worker thread");
    }
    let (name, surface) = match &cli.command {
        Command::Mass { surface } => ("mass", Some(surface.name())),
        Command::Minimize { surface } => ("minimize", Some(surface.name())),
        Command::Robin { surface } => ("robin", Some(surface.name())),
        Command::CheckInequalities => ("check-inequalities", None),
        Command::Verify { .. } => ("verify", None),
    };
    let cfg = RunConfig::resolve(name, surface, &settings)?;
    let hash = cfg.hash();
    log::info!("config hash {hash}");
    let dir = settings.out.clone().unwrap_or_else(|| PathBuf::from("deltamass-out"));
    let mut out = OutputDir::create(&dir, &hash)?;
    let code = match (&cli.command, surface) {
        (Command::Mass { .. }, Some(kind)) => commands::mass(kind, &cfg, &mut out)?,
        (Command::Minimize { .. }, Some(kind)) => commands::minimize(kind, &cfg, &mut out)?,
        (Command::Robin { .. }, Some(kind)) => commands::robin(kind, &cfg, &mut out)?,
        (Command::CheckInequalities, _) => commands::check_inequalities(&cfg, &mut out)?,
        (Command::Verify { record }, _) => verify::verify(&cfg, record.as_deref(), &mut out)?,
        _ => unreachable!("surface set for every surface command"),
    };
    let record = out.finish(&cfg)?;
    log::info!("wrote {}", record.display());
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Code::Invalid as u8 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let code = classify(&e);
            eprintln!("error: {e:#}");
            ExitCode::from(code as u8)
        }
    }
}
