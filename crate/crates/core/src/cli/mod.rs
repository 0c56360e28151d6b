//! Batch scenario runner behind the `weylscale` binary.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::error::Error;
pub use commands::{Invariant, Report, Summary};
pub use config::{parse_config, ScenarioConfig};
use output::{sha256_hex, write_json, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Run the invariant suite.
    Check,
    /// Disk centers and radii per (t, lambda).
    Disks,
    /// M-function estimates.
    Mfun,
    /// Resolvent diagnostics.
    Resolve,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Disks => "disks",
            Command::Mfun => "mfun",
            Command::Resolve => "resolve",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "weylscale",
    version,
    about = "Weyl-Sims disks, M-functions and resolvents on time scales"
)]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the scenario's `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for lambda sweeps.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("{context}: {source}")]
    Numeric {
        context: String,
        #[source]
        source: Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn config(path: &str, e: Error) -> Self {
        match e {
            Error::Config { path, message } => RunError::Config { path, message },
            other => RunError::Config {
                path: path.into(),
                message: other.to_string(),
            },
        }
    }

    pub fn numeric(context: impl Into<String>, e: Error) -> Self {
        match e {
            Error::Config { path, message } => RunError::Config { path, message },
            source => RunError::Numeric {
                context: context.into(),
                source,
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } => EXIT_CONFIG,
            RunError::Numeric { .. } | RunError::Io { .. } => EXIT_NUMERIC,
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Runs `command` on an already parsed scenario without touching the disk.
pub fn execute(command: Command, cfg: &ScenarioConfig) -> Result<Report, RunError> {
    let prep = commands::prepare(cfg)?;
    match command {
        Command::Check => commands::check(cfg, &prep),
        Command::Disks => commands::disks(cfg, &prep),
        Command::Mfun => commands::mfun(cfg, &prep),
        Command::Resolve => commands::resolve(cfg, &prep),
    }
}

/// Outcome of a full run: the exit code plus the files written.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub files: Vec<PathBuf>,
    pub summary: Option<Summary>,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run_inner(args: &Args) -> Result<Outcome, RunError> {
    let bytes = std::fs::read(&args.config).map_err(|e| RunError::Config {
        path: args.config.display().to_string(),
        message: e.to_string(),
    })?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| RunError::Config {
        path: args.config.display().to_string(),
        message: e.to_string(),
    })?;
    let stem = args
        .config
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario");
    let mut cfg =
        ScenarioConfig::from_json(&text, stem).map_err(|e| RunError::config("<root>", e))?;
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    if args.threads == Some(0) {
        return Err(RunError::Config {
            path: "--threads".into(),
            message: "must be positive".into(),
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Config {
            path: "--threads".into(),
            message: e.to_string(),
        })?;
    let report = pool.install(|| execute(args.command, &cfg))?;

    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("weylscale-out"));
    std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    let mut files = Vec::new();
    for (name, table) in &report.tables {
        let path = dir.join(format!("{name}.csv"));
        table.write(&path).map_err(io(&path))?;
        files.push(path);
    }
    let manifest = Manifest {
        command: args.command.name().into(),
        scenario: cfg.name.clone(),
        config_path: Some(args.config.clone()),
        config_hash: sha256_hex(&bytes),
        seed: cfg.seed,
        threads: args.threads,
        version: env!("CARGO_PKG_VERSION").into(),
        tolerances: cfg.thresholds,
        outputs: files
            .iter()
            .filter_map(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()))
            .collect(),
        results_summary: &report.summary,
    };
    let path = dir.join(format!("{}_manifest.json", args.command.name()));
    write_json(&path, &manifest).map_err(io(&path))?;
    files.push(path);
    let code = if report.summary.failed > 0 {
        EXIT_ASSERTION
    } else {
        EXIT_OK
    };
    Ok(Outcome {
        code,
        files,
        summary: Some(report.summary),
    })
}

/// Runs the command and reports to stderr; never panics on bad input.
pub fn run(args: &Args) -> Outcome {
    match run_inner(args) {
        Ok(out) => {
            if let Some(s) = &out.summary {
                for f in &s.failures {
                    eprintln!("FAIL {f}");
                }
            }
            out
        }
        Err(e) => {
            eprintln!("weylscale: {e}");
            Outcome {
                code: e.exit_code(),
                files: Vec::new(),
                summary: None,
            }
        }
    }
}
