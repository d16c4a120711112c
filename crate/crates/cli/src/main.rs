use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use qrc_cli::{cmd_resources, cmd_run, cmd_run_from_manifest, cmd_validate, ExperimentConfig};

/// Simulator and experiment driver for measured quantum reservoir computing
/// on a disordered spin network.
#[derive(Parser)]
#[command(name = "qrc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a protocol/task sweep and write a result table with its manifest.
    Run {
        /// Declarative experiment file (TOML).
        #[arg(long, conflicts_with = "manifest")]
        config: Option<String>,
        /// Regenerate a table from a previously written manifest.
        #[arg(long)]
        manifest: Option<String>,
        /// Output CSV path (defaults to the config's `output`).
        #[arg(long)]
        output: Option<String>,
        /// Config overrides, `path.to.field=value`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Tabulate experimental-time formulas and strength thresholds.
    Resources {
        #[arg(long)]
        config: String,
        #[arg(long)]
        output: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the oracle property suites and report pass/fail per property.
    Validate {
        /// Seed for the randomized checks.
        #[arg(long, default_value_t = 1234)]
        seed: u64,
        /// Optional JSON report path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn configure_workers() -> Result<()> {
    if let Ok(value) = std::env::var("QRC_WORKERS") {
        let workers: usize = value
            .parse()
            .with_context(|| format!("QRC_WORKERS = `{value}` is not a thread count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("initializing worker pool")?;
    }
    Ok(())
}

fn main() -> Result<()> {
    configure_workers()?;
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            manifest,
            output,
            set,
        } => {
            let path = match (config, manifest) {
                (Some(cfg), None) => {
                    let config = ExperimentConfig::load(&cfg, &set)?;
                    cmd_run(&config, output.as_deref())?
                }
                (None, Some(m)) => {
                    if !set.is_empty() {
                        bail!("--set cannot be combined with --manifest; edit a config instead");
                    }
                    cmd_run_from_manifest(std::path::Path::new(&m), output.as_deref())?
                }
                _ => bail!("exactly one of --config or --manifest is required"),
            };
            println!("wrote {}", path.display());
            println!("manifest {}", qrc_cli::manifest_path(&path).display());
        }
        Command::Resources {
            config,
            output,
            set,
        } => {
            let config = ExperimentConfig::load(&config, &set)?;
            let path = cmd_resources(&config, output.as_deref())?;
            println!("wrote {}", path.display());
        }
        Command::Validate { seed, output } => {
            let checks = cmd_validate(seed, output.as_deref())?;
            let mut failures = 0;
            for check in &checks {
                let status = if check.passed { "PASS" } else { "FAIL" };
                println!(
                    "{status} {:32} measured {: <12.3e} threshold {:.3e}  ({})",
                    check.name, check.measured, check.threshold, check.detail
                );
                if !check.passed {
                    failures += 1;
                }
            }
            println!(
                "{} of {} properties passed",
                checks.len() - failures,
                checks.len()
            );
        }
    }
    Ok(())
}
