//! Argument parsing, config merging, output and exit codes.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use gcdlab::Error;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::commands::{self, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// Directory for the on-disk prime sieve.
pub const SIEVE_CACHE_ENV: &str = "GCDLAB_SIEVE_CACHE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "gcdlab", version, about = "GCD sums, dilated series and their extremal constructions")]
pub struct Cli {
    /// JSON file with parameters for the subcommand; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// write the result here instead of stdout
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// worker threads; results do not depend on it
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// divisor sums σ_s(k) and the Gronwall envelope
    Sigma(commands::SigmaArgs),
    /// largest eigenvalue of a GCD matrix
    Eig(commands::EigArgs),
    /// GCD quadratic form and its divisor majorant
    Gcdsum(commands::GcdsumArgs),
    /// squared L² norm of a dilated series
    Norm(commands::NormArgs),
    /// exact Franel-Landau integrals as rationals
    Franel(commands::FranelArgs),
    /// block constructions and their divergence diagnostics
    Extremal(commands::ExtremalArgs),
    /// Monte-Carlo simulation of partial sums and block coupling
    Simulate(commands::SimulateArgs),
    /// run the acceptance suite
    Verify(commands::VerifyArgs),
}

#[derive(Debug)]
pub enum AppError {
    Usage(String),
    Core(Error),
    Io(String),
}

impl From<Error> for AppError {
    fn from(e: Error) -> Self {
        AppError::Core(e)
    }
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(Error::InvariantViolation(_) | Error::Accuracy(_) | Error::Diagnostic(_)) => EXIT_VIOLATION,
            _ => EXIT_USAGE,
        }
    }

    fn message(&self) -> String {
        match self {
            AppError::Usage(m) | AppError::Io(m) => m.clone(),
            AppError::Core(e) => e.to_string(),
        }
    }
}

/// Flag values as a JSON object, unset flags omitted.
fn flags_object<T: Serialize>(args: &T) -> Result<Map<String, Value>, AppError> {
    match serde_json::to_value(args).map_err(|e| AppError::Usage(e.to_string()))? {
        Value::Object(m) => Ok(m.into_iter().filter(|(_, v)| !v.is_null()).collect()),
        _ => Ok(Map::new()),
    }
}

fn read_config_file(path: &Path) -> Result<Map<String, Value>, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::Usage(format!("cannot read {}: {e}", path.display())))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(mut m)) => match m.remove("config") {
            // a previous output document or CSV sidecar: reuse its config block
            Some(Value::Object(inner)) if m.contains_key("command") => Ok(inner),
            Some(other) => {
                m.insert("config".into(), other);
                Ok(m)
            }
            None => Ok(m),
        },
        Ok(_) => Err(AppError::Usage(format!("{} must hold a JSON object", path.display()))),
        Err(e) => Err(AppError::Usage(format!("invalid JSON in {}: {e}", path.display()))),
    }
}

/// File values overlaid by flags, deserialized with defaults filled in.
pub fn merge<A: Serialize, C: for<'de> Deserialize<'de>>(file: &Map<String, Value>, args: &A) -> Result<C, AppError> {
    let mut merged = file.clone();
    merged.extend(flags_object(args)?);
    serde_json::from_value(Value::Object(merged)).map_err(|e| AppError::Usage(format!("invalid configuration: {e}")))
}

pub struct Rendered {
    pub command: &'static str,
    pub config: Value,
    pub result: Value,
    pub table: Table,
    pub exit: i32,
}

fn json_document(r: &Rendered) -> Result<String, AppError> {
    let mut doc = Map::new();
    doc.insert("command".into(), Value::String(r.command.into()));
    doc.insert("config".into(), r.config.clone());
    doc.insert("result".into(), r.result.clone());
    let mut s = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| AppError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn config_document(r: &Rendered) -> Result<String, AppError> {
    let mut doc = Map::new();
    doc.insert("command".into(), Value::String(r.command.into()));
    doc.insert("config".into(), r.config.clone());
    let mut s = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| AppError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn write_to(path: Option<&Path>, text: &str) -> Result<(), AppError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| AppError::Io(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| AppError::Io(e.to_string()))
        }
    }
}

fn emit(r: &Rendered, format: Format, output: Option<&Path>) -> Result<(), AppError> {
    match format {
        Format::Json => write_to(output, &json_document(r)?),
        Format::Csv => {
            write_to(output, &r.table.to_csv())?;
            let cfg = config_document(r)?;
            match output {
                Some(p) => {
                    let mut side = p.as_os_str().to_owned();
                    side.push(".config.json");
                    write_to(Some(Path::new(&side)), &cfg)
                }
                None => {
                    eprint!("{cfg}");
                    Ok(())
                }
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, AppError> {
    let mut file = match &cli.config {
        Some(p) => read_config_file(p)?,
        None => Map::new(),
    };
    let file_format = match file.remove("format") {
        Some(v) => Some(serde_json::from_value::<Format>(v).map_err(|e| AppError::Usage(format!("invalid format: {e}")))?),
        None => None,
    };
    let format = cli.format.or(file_format).unwrap_or_default();
    if let Ok(dir) = std::env::var(SIEVE_CACHE_ENV) {
        if !dir.is_empty() {
            if let Err(e) = gcdlab::numtheory::install_sieve_cache(Path::new(&dir)) {
                eprintln!("warning: sieve cache at {dir} unavailable: {e}");
            }
        }
    }
    let mut r = commands::dispatch(&cli.command, &file)?;
    if let Value::Object(m) = &mut r.config {
        m.insert("format".into(), serde_json::to_value(format).map_err(|e| AppError::Io(e.to_string()))?);
    }
    emit(&r, format, cli.output.as_deref())?;
    Ok(r.exit)
}

/// Parses `argv` and runs the command; returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let outcome = match cli.threads {
        Some(0) => Err(AppError::Usage("--threads must be at least 1".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(AppError::Io(e.to_string())),
        },
        None => execute(&cli),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
