//! The `ivnsim` command line: validate and compile ANDL sources, run
//! simulations and summarise exported results.
//!
//! Exit codes: 0 success, 1 semantic failure (diagnostics, infeasible
//! schedule, missing series), 2 I/O or usage error.

mod analyze;
mod run;
mod table;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ivnsim_andl::{CompileOptions, Diagnostic};
use ivnsim_core::time::parse_time;
use ivnsim_core::{NetworkConfig, SimTime};
use thiserror::Error;

pub use analyze::{analyze, Analysis, Metric};
pub use run::{run_scenario, RunOutcome, RunSpec};

#[derive(Debug, Parser)]
#[command(name = "ivnsim", version, about = "In-vehicle network simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Structured,
}

#[derive(Debug, clap::Args)]
pub struct SourceArgs {
    /// Extra ANDL files providing type libraries.
    #[arg(long = "lib", value_name = "FILE")]
    pub libs: Vec<PathBuf>,
    /// Network to pick when a source declares several.
    #[arg(long)]
    pub network: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check ANDL sources and print diagnostics.
    Validate {
        files: Vec<PathBuf>,
        #[command(flatten)]
        src: SourceArgs,
    },
    /// Compile an ANDL source into a network configuration document.
    Compile {
        file: PathBuf,
        #[command(flatten)]
        src: SourceArgs,
        /// Output path; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Simulate one or more scenarios (ANDL or compiled JSON).
    Run {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        src: SourceArgs,
        #[arg(long, value_parser = parse_time_arg)]
        horizon: Option<SimTime>,
        #[arg(long)]
        seed: Option<u64>,
        /// `key=value` override, applied after inline ini blocks.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Results directory; one subdirectory per input when several are given.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Bandwidth window `t0:t1` for the printed summary.
        #[arg(long, value_parser = parse_window)]
        window: Option<(SimTime, SimTime)>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Summarise exported results.
    Analyze {
        dir: PathBuf,
        #[arg(long, value_enum)]
        metric: Metric,
        /// Name pattern; `*` and `?` are wildcards, otherwise a substring.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, value_parser = parse_window)]
        window: Option<(SimTime, SimTime)>,
        /// Plot-ready CSV output.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

fn parse_time_arg(s: &str) -> Result<SimTime, String> {
    parse_time(s).map_err(|e| e.to_string())
}

pub fn parse_window(s: &str) -> Result<(SimTime, SimTime), String> {
    let (a, b) = s.split_once(':').ok_or("expected t0:t1")?;
    let (t0, t1) = (parse_time_arg(a)?, parse_time_arg(b)?);
    if t1 <= t0 {
        return Err("window end must be after its start".into());
    }
    Ok((t0, t1))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Semantic(String),
    /// Already reported; carries the exit code.
    #[error("")]
    Reported(i32),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Semantic(_) => 1,
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Reported(code) => *code,
        }
    }
}

pub(crate) fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub(crate) fn write_diags(err: &mut dyn Write, path: &Path, diags: &[Diagnostic]) {
    for d in diags {
        let _ = writeln!(err, "{}:{d}", path.display());
    }
}

/// Parses `files` plus type libraries and compiles the result. Diagnostics
/// are written to `err`; if any is an error the result is `Reported(1)`.
pub fn load_andl(
    files: &[PathBuf],
    src: &SourceArgs,
    err: &mut dyn Write,
) -> Result<(ivnsim_andl::Compiled, Vec<Diagnostic>), CliError> {
    let mut parsed = Vec::new();
    let mut failed = false;
    for path in src.libs.iter().chain(files) {
        let (file, diags) = ivnsim_andl::parse(&read(path)?);
        write_diags(err, path, &diags);
        failed |= ivnsim_andl::has_errors(&diags);
        parsed.push(file);
    }
    if failed {
        return Err(CliError::Reported(1));
    }
    let merged = ivnsim_andl::merge(parsed);
    let opts = CompileOptions { network: src.network.clone(), ..Default::default() };
    let label = files.first().cloned().unwrap_or_default();
    match ivnsim_andl::compile(&merged, &opts) {
        Ok((c, diags)) => {
            write_diags(err, &label, &diags);
            Ok((c, diags))
        }
        Err(diags) => {
            write_diags(err, &label, &diags);
            Err(CliError::Reported(1))
        }
    }
}

/// Loads a scenario: `.json` files are compiled configurations, anything
/// else is ANDL source.
pub fn load_config(path: &Path, src: &SourceArgs, err: &mut dyn Write) -> Result<NetworkConfig, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = read(path)?;
        return NetworkConfig::from_json(&text)
            .map_err(|e| CliError::Semantic(format!("{}: malformed configuration: {e}", path.display())));
    }
    load_andl(&[path.to_path_buf()], src, err).map(|(c, _)| c.config)
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            if !matches!(e, CliError::Reported(_)) {
                let _ = writeln!(err, "error: {e}");
            }
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Validate { files, src } => {
            if files.is_empty() {
                return Err(CliError::Usage("no input files".into()));
            }
            let (_, diags) = load_andl(&files, &src, err)?;
            let warnings = diags.len();
            let _ = writeln!(out, "ok ({warnings} warning{})", if warnings == 1 { "" } else { "s" });
            Ok(())
        }
        Command::Compile { file, src, out: dest } => {
            let (compiled, _) = load_andl(&[file], &src, err)?;
            let json = compiled.config.to_json();
            match dest {
                Some(p) => std::fs::write(&p, json + "\n").map_err(|source| CliError::Io { path: p, source }),
                None => {
                    let _ = writeln!(out, "{json}");
                    Ok(())
                }
            }
        }
        Command::Run { inputs, src, horizon, seed, overrides, out: dir, format, window, jobs } => {
            if horizon.is_some_and(|h| h <= SimTime::ZERO) {
                return Err(CliError::Usage("horizon must be positive".into()));
            }
            if jobs == 0 {
                return Err(CliError::Usage("--jobs must be at least 1".into()));
            }
            let specs: Vec<RunSpec> = inputs
                .iter()
                .map(|input| RunSpec {
                    input: input.clone(),
                    horizon,
                    seed,
                    overrides: overrides.clone(),
                    out: if inputs.len() == 1 { dir.clone() } else { dir.join(stem(input)) },
                    format,
                    window,
                })
                .collect();
            run::run_many(&specs, &src, jobs, out, err)
        }
        Command::Analyze { dir, metric, filter, window, plot } => {
            let a = analyze(&dir, metric, filter.as_deref(), window)?;
            let _ = write!(out, "{}", a.table);
            if let Some(p) = plot {
                std::fs::write(&p, &a.plot).map_err(|source| CliError::Io { path: p, source })?;
            }
            Ok(())
        }
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}
