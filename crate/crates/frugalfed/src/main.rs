use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};

use frugalfed::config::{parse_config, Strategy};
use frugalfed::fed::run_experiment;
use frugalfed::report::{compare, ExperimentReport, ReportFormat};
use frugalfed::{Result, SimError};

/// Directory that relative `--out` paths resolve against.
const OUT_DIR_VAR: &str = "FRUGALFED_OUT_DIR";

#[derive(Parser)]
#[command(name = "frugalfed", version, about = "Frugal federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment a config describes and emit its report.
    Run {
        /// Experiment config (TOML or JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the experiment seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Write here instead of stdout; relative paths resolve inside
        /// $FRUGALFED_OUT_DIR when it is set.
        #[arg(long)]
        out: Option<PathBuf>,
        /// json: full report; csv: per-round table.
        #[arg(long, default_value = "json", value_parser = ReportFormat::from_str)]
        format: ReportFormat,
    },
    /// Compare finished run reports against a baseline strategy.
    Compare {
        /// Report JSON files produced by `run`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Strategy whose run the ratios normalize against.
        #[arg(long, default_value = "pfl-decoupled", value_parser = Strategy::from_str)]
        baseline: Strategy,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json", value_parser = ReportFormat::from_str)]
        format: ReportFormat,
    },
    /// Check a config file and echo its fully resolved form.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            format,
        } => {
            let cfg = read_config(&config)?.resolved(seed)?;
            let report = run_experiment(&cfg)?;
            let text = report.emit(format)?;
            match out {
                Some(path) => {
                    let path = resolve_out(&path)?;
                    write_out(&path, &text)?;
                    println!(
                        "{} | rounds {} | val acc {:.4} | {:.3} Wh | {:.3} gCO2e | report: {}",
                        cfg.strategy.as_str(),
                        report.rounds_executed,
                        report.final_metrics.global.accuracy,
                        report.energy.total_wh,
                        report.energy.total_gco2e,
                        path.display()
                    );
                }
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Compare {
            reports,
            baseline,
            out,
            format,
        } => {
            let loaded = reports
                .iter()
                .map(|p| {
                    let text = std::fs::read_to_string(p).map_err(|e| {
                        SimError::parse(format!("cannot read report {}: {e}", p.display()))
                    })?;
                    ExperimentReport::from_json(&text)
                })
                .collect::<Result<Vec<_>>>()?;
            let table = compare(&loaded, baseline)?;
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            let text = match format {
                ReportFormat::Json => table.to_json()?,
                ReportFormat::Csv => table.to_csv(),
            };
            match out {
                Some(path) => {
                    let path = resolve_out(&path)?;
                    write_out(&path, &text)?;
                    println!("comparison table: {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = read_config(&config)?.resolved(None)?;
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

/// Anything wrong with the config file itself — unreadable, unparseable, or
/// invalid — is a config error (exit 2), not a runtime failure.
fn read_config(path: &Path) -> Result<frugalfed::config::ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::parse(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

fn resolve_out(path: &Path) -> Result<PathBuf> {
    let resolved = match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    };
    if let Some(parent) = resolved.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_at(parent, e))?;
        }
    }
    Ok(resolved)
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_at(path, e))
}

/// Keep the Io variant (runtime failure, exit 3) but name the path.
fn io_at(path: &Path, e: std::io::Error) -> SimError {
    SimError::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}
