//! `thzsim`: scenario-driven runner for the THz indoor channel simulator.
//!
//! Verbs:
//! - `generate`        generate drops and store CTF tensors
//! - `stats`           compute the statistics a scenario requests
//! - `figure <name>`   run a named figure recipe (fig4-acf, fig5-ccf,
//!                     fig6-fcf, fig7-ccdf)
//! - `validate-config` parse and validate a scenario file
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use thz_channel::montecarlo::{figure_scenario, run_montecarlo, FigureName};
use thz_channel::scenario::Scenario;
use thz_channel::ChannelError;

#[derive(Parser)]
#[command(name = "thzsim", version, about = "THz indoor massive-MIMO channel simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct RunArgs {
    /// Scenario file (flat key = value format).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the ensemble size.
    #[arg(long)]
    ensemble: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any scenario key (repeatable): --override key=value.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Lift the desk-scale memory guard.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an ensemble of drops and store their CTF tensors.
    Generate(RunArgs),
    /// Compute the statistics requested by the scenario (reusing stored
    /// tensors when they match the configuration).
    Stats(RunArgs),
    /// Reproduce a named figure recipe.
    Figure {
        /// One of: fig4-acf, fig5-ccf, fig6-fcf, fig7-ccdf.
        name: String,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Parse and validate a scenario file.
    ValidateConfig {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn is_config_error(err: &ChannelError) -> bool {
    matches!(
        err,
        ChannelError::InvalidConfig(_)
            | ChannelError::InvalidField { .. }
            | ChannelError::ScenarioParse { .. }
            | ChannelError::EmptyInput(_)
            | ChannelError::MemoryBudget(_)
    )
}

fn exit_for(err: &ChannelError) -> ExitCode {
    if is_config_error(err) {
        ExitCode::from(2)
    } else {
        ExitCode::from(3)
    }
}

fn split_overrides(raw: &[String]) -> Result<Vec<(String, String)>, ChannelError> {
    raw.iter()
        .map(|entry| {
            entry
                .split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| ChannelError::InvalidConfig(format!(
                    "override `{entry}` is not of the form key=value"
                )))
        })
        .collect()
}

/// Apply CLI flags and --override pairs on top of a base scenario.
fn finalize(base: Scenario, args: &RunArgs) -> Result<Scenario, ChannelError> {
    let mut overrides = split_overrides(&args.overrides)?;
    if let Some(seed) = args.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(ensemble) = args.ensemble {
        overrides.push(("ensemble".into(), ensemble.to_string()));
    }
    if let Some(out) = &args.out {
        overrides.push(("out_dir".into(), out.display().to_string()));
    }
    let mut scenario = if overrides.is_empty() { base } else { base.apply_overrides(&overrides)? };
    scenario.paper_scale = args.paper_scale;
    Ok(scenario)
}

fn load_base(args: &RunArgs) -> Result<Scenario, ChannelError> {
    let path = args.scenario.as_ref().ok_or_else(|| {
        ChannelError::InvalidConfig("--scenario <path> is required for this command".into())
    })?;
    Scenario::load(path)
}

fn run(scenario: &Scenario) -> Result<(), ChannelError> {
    let manifest = run_montecarlo(scenario)?;
    println!(
        "run complete: {} drops, config hash {}",
        manifest.completed_drops, manifest.config_hash
    );
    for f in &manifest.stat_files {
        println!("  wrote {}", scenario.out_dir.join(f).display());
    }
    println!("  manifest {}", scenario.out_dir.join("manifest.json").display());
    println!("  elapsed {:.2} s", manifest.elapsed_seconds);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), ChannelError> {
    match cli.command {
        Command::Generate(args) => {
            let mut scenario = finalize(load_base(&args)?, &args)?;
            scenario.save_ctf = true;
            run(&scenario)
        }
        Command::Stats(args) => {
            let scenario = finalize(load_base(&args)?, &args)?;
            if scenario.stats.is_empty() {
                return Err(ChannelError::InvalidConfig(
                    "scenario requests no statistics; set e.g. `stats = acf`".into(),
                ));
            }
            run(&scenario)
        }
        Command::Figure { name, args } => {
            let figure = FigureName::parse(&name).ok_or_else(|| {
                ChannelError::InvalidConfig(format!(
                    "unknown figure `{name}`; expected fig4-acf, fig5-ccf, fig6-fcf, or fig7-ccdf"
                ))
            })?;
            let base = match &args.scenario {
                Some(path) => Scenario::load(path)?,
                None => figure_scenario(figure, args.seed.unwrap_or(1)),
            };
            let scenario = finalize(base, &args)?;
            run(&scenario)
        }
        Command::ValidateConfig { scenario } => {
            let s = Scenario::load(&scenario)?;
            s.effective_grid()?;
            println!("ok: scenario valid, config hash {}", s.config_hash());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            exit_for(&err)
        }
    }
}
