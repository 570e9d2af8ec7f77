//! `pairmatch` command line.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config;
use crate::evalharness::{aggregate, find_preset, format_preset_row, format_report, PRESETS, PRESET_HEADER};
use crate::featureio::{decode_features, decode_matches, load_manifest, FEATURE_MAGIC, MATCH_MAGIC};
use crate::model::PipelineConfig;
use crate::pipeline::run_manifest;
use crate::synthetic::{write_benchmark_dataset, BenchmarkSpec};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "pairmatch", version, about = "Two-view match fusion and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify every pair of a manifest and write the report.
    Run(RunArgs),
    /// Check MFK1, MMT1 and manifest files.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// List the submission presets.
    Presets {
        #[arg(long)]
        name: Option<String>,
        /// Print the named preset as config text.
        #[arg(long, requires = "name")]
        as_config: bool,
    },
    /// Write a synthetic benchmark (MMT1 files and a manifest).
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 3)]
        matching: usize,
        #[arg(long, default_value_t = 0)]
        non_matching: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub preset: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Overrides the configured RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn resolve_config(args: &RunArgs) -> Result<PipelineConfig, ExitCode> {
    let mut cfg = match (&args.preset, &args.config) {
        (Some(name), _) => find_preset(name).map_err(|e| fail(EXIT_USAGE, e))?.config(),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", path.display())))?;
            config::from_text(&text).map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(fail(EXIT_USAGE, "one of --preset or --config is required")),
    };
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    Ok(cfg)
}

pub fn cmd_run(args: &RunArgs) -> ExitCode {
    let cfg = match resolve_config(args) {
        Ok(cfg) => cfg,
        Err(code) => return code,
    };
    let manifest = match load_manifest(&args.manifest) {
        Ok(m) => m,
        Err(e) => return fail(EXIT_FAILURE, format!("{}: {e}", args.manifest.display())),
    };
    let records = match run_manifest(&manifest, &cfg, args.jobs) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    let report = aggregate(&records, &config::fingerprint(&cfg));
    match fs::write(&args.out, format_report(&records, &report)) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => fail(EXIT_FAILURE, format!("{}: {e}", args.out.display())),
    }
}

/// One verdict: `Ok(())` or `(code, message)`.
pub fn validate_file(path: &Path) -> Result<(), (&'static str, String)> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if matches!(ext, "tsv" | "txt" | "manifest") {
        return load_manifest(path).map(drop).map_err(|e| (e.code(), e.to_string()));
    }
    let bytes = fs::read(path).map_err(|e| ("IO_ERROR", e.to_string()))?;
    let by_magic = |m: &[u8; 4]| bytes.starts_with(m);
    let result = match ext {
        "mfk" => decode_features(&bytes).map(drop),
        "mmt" => decode_matches(&bytes).map(drop),
        _ if by_magic(FEATURE_MAGIC) => decode_features(&bytes).map(drop),
        _ if by_magic(MATCH_MAGIC) => decode_matches(&bytes).map(drop),
        _ => return Err(("BAD_MAGIC", "neither MFK1 nor MMT1".into())),
    };
    result.map_err(|e| (e.code(), e.to_string()))
}

pub fn cmd_validate(paths: &[PathBuf], out: &mut impl Write) -> io::Result<ExitCode> {
    let mut all_ok = true;
    for path in paths {
        match validate_file(path) {
            Ok(()) => writeln!(out, "{}\tOK", path.display())?,
            Err((code, msg)) => {
                all_ok = false;
                writeln!(out, "{}\t{code}\t{msg}", path.display())?;
            }
        }
    }
    Ok(ExitCode::from(if all_ok { EXIT_OK } else { EXIT_FAILURE }))
}

pub fn cmd_presets(name: Option<&str>, as_config: bool, out: &mut impl Write) -> io::Result<ExitCode> {
    let rows = match name {
        Some(name) => match find_preset(name) {
            Ok(p) => vec![p],
            Err(e) => return Ok(fail(EXIT_USAGE, e)),
        },
        None => PRESETS.iter().collect(),
    };
    if as_config {
        for p in rows {
            write!(out, "{}", config::to_text(&p.config()))?;
        }
    } else {
        writeln!(out, "{PRESET_HEADER}")?;
        for p in rows {
            writeln!(out, "{}", format_preset_row(p))?;
        }
    }
    Ok(ExitCode::from(EXIT_OK))
}

pub fn run(cli: Cli) -> ExitCode {
    let mut stdout = io::stdout().lock();
    let outcome = match &cli.command {
        Command::Run(args) => Ok(cmd_run(args)),
        Command::Validate { paths } => cmd_validate(paths, &mut stdout),
        Command::Presets { name, as_config } => cmd_presets(name.as_deref(), *as_config, &mut stdout),
        Command::Synth {
            out_dir,
            matching,
            non_matching,
            seed,
        } => match write_benchmark_dataset(out_dir, &BenchmarkSpec::default(), *matching, *non_matching, *seed) {
            Ok(path) => writeln!(stdout, "{}", path.display()).map(|_| ExitCode::from(EXIT_OK)),
            Err(e) => Ok(fail(EXIT_FAILURE, e)),
        },
    };
    outcome.unwrap_or_else(|e| fail(EXIT_FAILURE, e))
}
