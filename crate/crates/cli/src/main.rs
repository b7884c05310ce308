//! `bundlenet`: run the experiment suite from the command line.
//!
//! Exit codes: 0 on success, 1 when an experiment fails at runtime, 2 on
//! usage errors (bad flags, malformed or unknown configuration).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use bundlenet_cli::config::{apply_overrides, GradcheckJob, Job, EXPERIMENT_KINDS};
use bundlenet_cli::manifest;
use bundlenet_cli::runner::{
    execute, gradcheck_table, paramcount_table, replot, RESOLVED_CONFIG_FILE,
};

/// Environment variable naming the default output root.
const OUT_ENV: &str = "BUNDLENET_OUT";
const DEFAULT_OUT: &str = "runs";

#[derive(Parser)]
#[command(
    name = "bundlenet",
    version,
    about = "Continual-learning experiment suite: bundle layers and bioclocks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSVs, plots, and a manifest.
    Run(RunArgs),
    /// Re-render the SVG plots of a finished run from its CSVs.
    Plot(PlotArgs),
    /// Print the parameter counts of the reference architectures.
    Paramcount,
    /// Audit analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file (mutually exclusive with --experiment).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment kind to run with default settings.
    #[arg(long, value_name = "KIND")]
    experiment: Option<String>,
    /// Output root. Overrides $BUNDLENET_OUT; default "runs".
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated seed list overriding the configured seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// key=value override applied to the configuration (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct PlotArgs {
    /// Run directory holding config.resolved.json and the CSVs.
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Rows in each probe batch.
    #[arg(long, default_value_t = GradcheckJob::default().batch)]
    batch: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = GradcheckJob::default().eps)]
    eps: f64,
    /// Maximum tolerated relative error.
    #[arg(long, default_value_t = GradcheckJob::default().threshold)]
    threshold: f64,
    /// Comma-separated seed list.
    #[arg(long, default_value = "0")]
    seeds: String,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let seeds = text
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<u64>()
                .map_err(|e| usage(format!("--seeds: {part:?} is not a seed: {e}")))
        })
        .collect::<Result<Vec<u64>, CliError>>()?;
    if seeds.is_empty() {
        return Err(usage("--seeds: expected at least one seed"));
    }
    Ok(seeds)
}

fn resolve_out_root(flag: Option<&Path>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(DEFAULT_OUT),
    }
}

fn load_job(args: &RunArgs) -> Result<Job, CliError> {
    let mut value = match (&args.config, &args.experiment) {
        (Some(_), Some(_)) => {
            return Err(usage("--config and --experiment are mutually exclusive"));
        }
        (None, None) => {
            return Err(usage(format!(
                "one of --config or --experiment is required; kinds: {}",
                EXPERIMENT_KINDS.join(", ")
            )));
        }
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<Value>(&text)
                .map_err(|e| usage(format!("{}: configuration is not JSON: {e}", path.display())))?
        }
        (None, Some(kind)) => serde_json::json!({ "experiment": kind }),
    };
    apply_overrides(&mut value, &args.set).map_err(CliError::Usage)?;
    let mut job = Job::from_value(value).map_err(CliError::Usage)?;
    if let Some(seeds) = &args.seeds {
        let parsed = parse_seeds(seeds)?;
        job.set_seeds(parsed).map_err(CliError::Usage)?;
    }
    Ok(job)
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let job = load_job(args)?;
    let out_root = resolve_out_root(args.out_dir.as_deref());
    let output = execute(&job, &out_root).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{}", output.dir.display());
    for name in &output.outputs {
        println!("  {name}");
    }
    println!("  {}", manifest::MANIFEST_FILE);
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    let config_path = args.dir.join(RESOLVED_CONFIG_FILE);
    if !config_path.is_file() {
        return Err(usage(format!(
            "{}: not a run directory (missing {RESOLVED_CONFIG_FILE})",
            args.dir.display()
        )));
    }
    let written = replot(&args.dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    if written.is_empty() {
        println!("{}: no plots for this experiment kind", args.dir.display());
    }
    for name in &written {
        println!("{}", args.dir.join(name).display());
    }
    Ok(())
}

fn cmd_paramcount() -> Result<(), CliError> {
    let table = paramcount_table().map_err(|e| CliError::Runtime(e.to_string()))?;
    let width = table
        .rows
        .iter()
        .map(|r| r[0].len())
        .max()
        .unwrap_or(0);
    for row in &table.rows {
        println!("{:<width$}  {}", row[0], row[1]);
    }
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    let job = GradcheckJob {
        batch: args.batch,
        eps: args.eps,
        threshold: args.threshold,
        seeds: parse_seeds(&args.seeds)?,
        ..GradcheckJob::default()
    };
    let table = gradcheck_table(&job).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut failures = 0usize;
    for row in &table.rows {
        let ok = row[4] == "true";
        if !ok {
            failures += 1;
        }
        println!(
            "{} {:<24} checked={:<6} max_rel_err={:<12} {}",
            row[0],
            row[1],
            row[2],
            row[3],
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failures > 0 {
        return Err(CliError::Runtime(format!(
            "{failures} gradient check(s) exceeded the threshold"
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Paramcount => cmd_paramcount(),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
