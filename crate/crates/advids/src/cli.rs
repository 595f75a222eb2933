//! The `advids` command line: train / attack / evaluate / run-all /
//! synth-data / report.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
//! divergence. Results go to files (and to standard output only with
//! `--stdout`); progress and errors go to standard error as single lines.
//!
//! Override precedence per key: `--set key=value` beats the config file,
//! which beats built-in defaults; the dedicated `--seed`, `--threads`,
//! and `--out` flags beat `--set`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::dataio::{write_csv, SyntheticSpec};
use crate::experiment::{
    compare, emit, run, stage_attack, stage_evaluate, stage_train, EmitFormat, ExperimentConfig,
    ExperimentError, ExperimentReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "advids",
    version,
    about = "Train IoT intrusion-detection classifiers, craft FGSM/BIM/PGD evasion samples, and compare degradation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config JSON (required by every subcommand except synth-data)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Use this single seed instead of the config's seed list
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Cap on parallel worker threads
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Output directory (output file for synth-data)
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Override a config key, e.g. --set train.epochs=30 (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Also print the resulting JSON document to standard output
    #[arg(long, global = true)]
    stdout: bool,

    /// Increase progress verbosity
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train all configured models; persist splits, stats, and checkpoints
    Train,
    /// Craft adversarial datasets from cached checkpoints
    Attack,
    /// Score clean and adversarial splits into report.json
    Evaluate,
    /// Full pipeline in one process: train, attack, evaluate, emit
    RunAll,
    /// Generate a synthetic dataset CSV
    SynthData {
        /// Built-in spec name (currently: botiot-mini)
        #[arg(long, value_name = "NAME")]
        preset: Option<String>,
        /// Synthetic spec JSON file (alternative to --preset)
        #[arg(long, value_name = "PATH")]
        spec: Option<PathBuf>,
    },
    /// Re-emit tables from the report in the output directory
    Report {
        /// Output format: json, csv-grid, or plot-data
        #[arg(long, default_value = "plot-data", value_name = "FMT")]
        format: String,
    },
}

enum CliError {
    Usage(String),
    Data(String),
    Divergence(String),
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        if e.is_divergence() {
            CliError::Divergence(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<crate::dataio::DataError> for CliError {
    fn from(e: crate::dataio::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Parse argv and execute; returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return EXIT_OK;
        }
        Err(e) => {
            eprint!("{e}");
            return EXIT_USAGE;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            let (kind, msg, code) = match err {
                CliError::Usage(m) => ("usage", m, EXIT_USAGE),
                CliError::Data(m) => ("data", m, EXIT_DATA),
                CliError::Divergence(m) => ("divergence", m, EXIT_DIVERGENCE),
            };
            eprintln!("error: {kind}: {}", msg.replace('\n', " "));
            code
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::SynthData { preset, spec } => synth_data(cli, preset.as_deref(), spec.as_deref()),
        Command::Train => {
            let (cfg, out) = effective_config(cli)?;
            progress(cli, &format!("training into {}", out.display()));
            stage_train(&cfg, &out)?;
            progress(cli, "checkpoints written");
            Ok(())
        }
        Command::Attack => {
            let (cfg, out) = effective_config(cli)?;
            progress(cli, &format!("crafting adversarial sets into {}", out.display()));
            stage_attack(&cfg, &out)?;
            progress(cli, "adversarial datasets written");
            Ok(())
        }
        Command::Evaluate => {
            let (cfg, out) = effective_config(cli)?;
            progress(cli, "scoring splits");
            let report = stage_evaluate(&cfg, &out)?;
            finish_report(cli, &report, &out)
        }
        Command::RunAll => {
            let (mut cfg, out) = effective_config(cli)?;
            cfg.output_dir = Some(out.clone());
            progress(cli, &format!("running full pipeline into {}", out.display()));
            let report = run(&cfg)?;
            finish_report(cli, &report, &out)
        }
        Command::Report { format } => {
            let (_cfg, out) = effective_config(cli)?;
            let format: EmitFormat = format.parse().map_err(CliError::Usage)?;
            let report = ExperimentReport::load(out.join("report.json"))?;
            let files = match format {
                EmitFormat::PlotData => emit(&report, format, out.join("figures"))?,
                _ => emit(&report, format, &out)?,
            };
            for f in &files {
                progress(cli, &format!("wrote {}", f.display()));
            }
            if cli.stdout {
                println!("{}", report.to_json()?);
            }
            Ok(())
        }
    }
}

/// Emit grid + figures + comparison next to the report, then honor --stdout.
fn finish_report(cli: &Cli, report: &ExperimentReport, out: &Path) -> Result<(), CliError> {
    report.save(out.join("report.json"))?;
    emit(report, EmitFormat::CsvGrid, out)?;
    emit(report, EmitFormat::PlotData, out.join("figures"))?;
    if report.variants().len() == 2 {
        let summary = compare(report)?;
        std::fs::write(out.join("comparison.json"), summary.to_json()?)
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    progress(
        cli,
        &format!("report written to {}", out.join("report.json").display()),
    );
    if cli.stdout {
        println!("{}", report.to_json()?);
    }
    Ok(())
}

fn progress(cli: &Cli, msg: &str) {
    let _ = cli.verbose; // progress is single-line; -v reserved for future detail
    eprintln!("advids: {msg}");
}

fn synth_data(cli: &Cli, preset: Option<&str>, spec: Option<&Path>) -> Result<(), CliError> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("synth-data needs --out FILE".into()))?;
    let mut spec = match (preset, spec) {
        (Some(name), None) => match name {
            "botiot-mini" => SyntheticSpec::botiot_mini(7),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown preset {other:?}; available: botiot-mini"
                )))
            }
        },
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(e.to_string()))?;
            serde_json::from_str(&text).map_err(|e| CliError::Data(e.to_string()))?
        }
        (None, None) => SyntheticSpec::botiot_mini(7),
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "pass either --preset or --spec, not both".into(),
            ))
        }
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let ds = spec.generate()?;
    write_csv(&ds, &out)?;
    progress(
        cli,
        &format!("wrote {} rows x {} features to {}", ds.n(), ds.dim(), out.display()),
    );
    Ok(())
}

/// Assemble the effective config: defaults < config file < --set < flags.
/// Returns the config and the resolved output directory.
fn effective_config(cli: &Cli) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("this subcommand needs --config PATH".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if !value.is_object() {
        return Err(CliError::Data(format!(
            "{}: config root must be a JSON object",
            path.display()
        )));
    }
    for spec in &cli.overrides {
        apply_override(&mut value, spec)?;
    }
    if let Some(seed) = cli.seed {
        value["seeds"] = serde_json::json!([seed]);
    }
    if let Some(threads) = cli.threads {
        value["threads"] = serde_json::json!(threads);
    }
    if let Some(out) = &cli.out {
        value["output_dir"] = serde_json::json!(out);
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| CliError::Data(e.to_string()))?;
    cfg.validate()?;
    let out = cfg
        .output_dir
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory (--out or output_dir)".into()))?;
    Ok((cfg, out))
}

/// Set one dotted-path key to a JSON-parsed value (falls back to string).
fn apply_override(value: &mut serde_json::Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set {spec:?} is not KEY=VALUE")))?;
    if path.is_empty() {
        return Err(CliError::Usage(format!("--set {spec:?} has an empty key")));
    }
    let parsed: serde_json::Value =
        serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = value;
    let parts: Vec<&str> = path.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        cursor = cursor
            .as_object_mut()
            .ok_or_else(|| CliError::Data(format!("--set {spec:?}: {part:?} is not an object")))?
            .entry(part.to_string())
            .or_insert_with(|| serde_json::json!({}));
    }
    cursor
        .as_object_mut()
        .ok_or_else(|| CliError::Data(format!("--set {spec:?}: parent is not an object")))?
        .insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}
