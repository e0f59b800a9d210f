//! Command-line fairness audit over tabular data.
//!
//! `run_cli` parses arguments, resolves the run configuration (config file
//! first, then flags), executes the requested analyses and writes the report.

pub mod config;
pub mod error;
pub mod report;
pub mod run;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{Analysis, Format, RunConfig};
pub use error::CliError;
pub use report::AuditReport;

#[derive(Parser, Debug)]
#[command(name = "fairaudit", version, about = "Audit group disparities in model error")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key=value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    data: Option<String>,
    #[arg(long, global = true)]
    schema: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Output directory; without it the JSON report goes to stdout.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true, value_parser = ["json", "csv"])]
    format: Option<String>,
    #[arg(long, global = true)]
    trials: Option<String>,
    /// Comma-separated training sizes.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Comma-separated cost kinds: zo, fpr, fnr, mse, gzo, brier.
    #[arg(long, global = true)]
    kind: Option<String>,
    #[arg(long, global = true)]
    threshold: Option<String>,
    #[arg(long, global = true)]
    level: Option<String>,
    #[arg(long, global = true)]
    k: Option<String>,
    #[arg(long, global = true)]
    folds: Option<String>,
    #[arg(long, global = true)]
    reps: Option<String>,
    /// Soft membership matrix with columns q_0..q_{C-1}, one row per data row.
    #[arg(long, global = true)]
    topics: Option<String>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Run the analyses listed under `analyses` (default: costs, tests).
    Audit,
    /// Bias, variance and noise decomposition of group costs.
    Decompose,
    /// Learning curves, power-law fits and gap extrapolation.
    Curves,
    /// Bayes-error bounds per group.
    Noise,
    /// Cluster-level cost disparities.
    Subgroups,
    /// Significance tests and bootstrap intervals.
    Test,
    /// Write a synthetic dataset with known outcome model.
    Synth,
    /// Re-emit a stored JSON report in the chosen format.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Audit => "audit",
            Command::Decompose => "decompose",
            Command::Curves => "curves",
            Command::Noise => "noise",
            Command::Subgroups => "subgroups",
            Command::Test => "test",
            Command::Synth => "synth",
            Command::Report { .. } => "report",
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    let flags = [
        ("data", &cli.data),
        ("schema", &cli.schema),
        ("seed", &cli.seed),
        ("out", &cli.out),
        ("format", &cli.format),
        ("trials", &cli.trials),
        ("grid", &cli.grid),
        ("kinds", &cli.kind),
        ("threshold", &cli.threshold),
        ("level", &cli.level),
        ("k", &cli.k),
        ("folds", &cli.folds),
        ("reps", &cli.reps),
        ("topics", &cli.topics),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(AuditReport, RunConfig), CliError> {
    let cfg = resolve_config(cli)?;
    let single = |a: Analysis| vec![a];
    let report = match &cli.command {
        Command::Audit => run::analyze("audit", &cfg, &cfg.analyses)?,
        Command::Decompose => run::analyze("decompose", &cfg, &single(Analysis::Decompose))?,
        Command::Curves => run::analyze("curves", &cfg, &single(Analysis::Curves))?,
        Command::Noise => run::analyze("noise", &cfg, &single(Analysis::Noise))?,
        Command::Subgroups => run::analyze("subgroups", &cfg, &single(Analysis::Subgroups))?,
        Command::Test => run::analyze("test", &cfg, &single(Analysis::Tests))?,
        Command::Synth => run::synth(&cfg)?,
        Command::Report { input } => run::reemit(input)?,
    };
    Ok((report, cfg))
}

fn emit(report: &AuditReport, cfg: &RunConfig) -> Result<(), CliError> {
    match &cfg.out {
        Some(dir) => {
            report.write(dir, cfg.format)?;
        }
        None => {
            if cfg.format == Format::Csv {
                return Err(CliError::Config("csv output needs an output directory (`out`)".into()));
            }
            let text = report.to_json()?;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Config(format!("cannot write to stdout: {e}")))?;
        }
    }
    Ok(())
}

/// Run the tool on `args` (program name first) and return the exit status:
/// 0 on success, 2 for configuration errors, 3 for data errors and 4 when an
/// analysis failed.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = execute(&cli).and_then(|(report, cfg)| {
        emit(&report, &cfg)?;
        Ok(report)
    });
    match result {
        Ok(report) if report.has_error() => {
            for b in &report.blocks {
                if let report::Block::Error(e) = b {
                    eprintln!(
                        "fairaudit {}: {} failed: {}",
                        cli.command.name(),
                        e.failed_analysis,
                        e.message
                    );
                }
            }
            4
        }
        Ok(_) => 0,
        Err(e) => {
            eprintln!("fairaudit {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
