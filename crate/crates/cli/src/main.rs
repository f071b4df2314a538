use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spikegrid::config::{bundled, bundled_names};
use spikegrid::{
    run_experiment, summarize, validate_config, CliError, ExperimentKind, ExperimentPlan,
};

/// DC-microgrid and spiking-network co-simulation under measurement noise.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Configuration document, or `builtin:<name>` for a bundled one.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace the seed axis with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and print the filled-in plan.
    Validate,
    /// Run the configured experiment.
    Run,
    /// Run the configuration as an event-capture sweep.
    Sweep,
    /// Aggregate the sweep grids under a directory.
    Summarize {
        /// Artifact directory (defaults to --out).
        dir: Option<PathBuf>,
    },
    /// Replay the configured scenario under noise with a trained estimator.
    Replay,
    /// List the bundled configurations.
    List,
}

fn load(cli: &Cli) -> Result<ExperimentPlan, CliError> {
    let spec = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Format("--config is required".into()))?;
    let text = match spec.strip_prefix("builtin:") {
        Some(name) => bundled(name)
            .ok_or_else(|| CliError::Format(format!("no bundled configuration `{name}`")))?
            .to_owned(),
        None => fs::read_to_string(spec).map_err(|e| CliError::Io {
            path: spec.into(),
            source: e,
        })?,
    };
    let mut plan = validate_config(&text)?;
    if let Some(seed) = cli.seed {
        plan.axes.seeds = vec![seed];
    }
    Ok(plan)
}

fn out_dir(cli: &Cli, plan: &ExperimentPlan) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| plan.output.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(plan.kind.as_str()))
}

fn execute(cli: &Cli, plan: ExperimentPlan) -> Result<(), CliError> {
    let dir = out_dir(cli, &plan);
    let outcome = run_experiment(&plan, &dir, cli.jobs)?;
    println!("{} -> {}", plan.kind.as_str(), dir.display());
    for c in &outcome.checks {
        println!(
            "  [{}] {}: {}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    for f in &outcome.failures {
        eprintln!("  failed cell: {f}");
    }
    if !outcome.failures.is_empty() {
        return Err(CliError::Format(format!(
            "{} cell(s) failed",
            outcome.failures.len()
        )));
    }
    match outcome.failed_checks() {
        0 => Ok(()),
        failed => Err(CliError::Acceptance { failed }),
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate => {
            let plan = load(cli)?;
            println!("{}", plan.to_document()?);
            Ok(())
        }
        Command::Run => execute(cli, load(cli)?),
        Command::Sweep => {
            let mut plan = load(cli)?;
            plan.kind = ExperimentKind::EventCaptureSweep;
            plan.validate().into_result().map_err(|e| match e {
                spikegrid_core::Error::Invalid(r) => CliError::Invalid(r),
                other => CliError::Core {
                    context: "sweep".into(),
                    source: other,
                },
            })?;
            execute(cli, plan)
        }
        Command::Replay => {
            let mut plan = load(cli)?;
            plan.kind = ExperimentKind::OutageReplay;
            plan.validate().into_result().map_err(|e| match e {
                spikegrid_core::Error::Invalid(r) => CliError::Invalid(r),
                other => CliError::Core {
                    context: "replay".into(),
                    source: other,
                },
            })?;
            execute(cli, plan)
        }
        Command::Summarize { dir } => {
            let dir = dir
                .clone()
                .or_else(|| cli.out.clone())
                .ok_or_else(|| CliError::Format("summarize needs a directory".into()))?;
            let summary = summarize(&dir)?;
            summary.write(&dir)?;
            print!("{}", summary.table());
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            Ok(())
        }
        Command::List => {
            for name in bundled_names() {
                println!("builtin:{name}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
