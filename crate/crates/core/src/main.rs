use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use jdtc::config::{parse_config, ScenarioConfig};
use jdtc::report::{write_csv, CsvLayout, RunInfo, Series};
use jdtc::sim::{monte_carlo, FilterKind, MonteCarloResult, Scenario};

#[derive(Parser)]
#[command(name = "jdtc", version, about = "Multi-sensor joint detection, tracking and classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment and write metrics CSV files.
    Run(RunArgs),
    /// Print a built-in configuration as TOML.
    Preset {
        #[arg(default_value = "paper-reference")]
        name: String,
    },
    /// Validate a configuration file and print the effective configuration.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Filter {
    Centralized,
    Distributed,
}

#[derive(Args)]
struct RunArgs {
    filter: Filter,
    /// Configuration file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration, used when no file is given.
    #[arg(long, default_value = "paper-reference")]
    preset: String,
    /// Output CSV. Distributed runs also write `<stem>.node<id>.csv` per node.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Consensus iterations per step.
    #[arg(long = "L", value_name = "STEPS")]
    consensus_steps: Option<usize>,
    /// Link range of the geometric network, in meters.
    #[arg(long)]
    topology_radius: Option<f64>,
    /// `KEY=VALUE` with a dotted key or alias (pD, pS, pB, lambda, R, L, radius, trials, seed).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

type BoxError = Box<dyn std::error::Error>;

fn effective_config(args: &RunArgs) -> Result<ScenarioConfig, BoxError> {
    let base = match &args.config {
        Some(path) => parse_config(path)?,
        None => ScenarioConfig::preset(&args.preset).ok_or_else(|| format!("unknown preset `{}`", args.preset))?,
    };
    // Dedicated flags win over generic overrides, which win over the file.
    let mut overrides = args.overrides.clone();
    if let Some(t) = args.trials {
        overrides.push(format!("run.trials={t}"));
    }
    if let Some(s) = args.seed {
        overrides.push(format!("run.seed={s}"));
    }
    if let Some(l) = args.consensus_steps {
        overrides.push(format!("network.consensus_steps={l}"));
    }
    if let Some(r) = args.topology_radius {
        overrides.push(format!("network.radius_m={r:?}"));
    }
    Ok(base.with_overrides(&overrides)?)
}

fn node_path(out: &Path, node: u32) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("metrics");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.with_file_name(format!("{stem}.node{node}.{ext}"))
}

fn write_file(
    path: &Path,
    info: RunInfo<'_>,
    layout: &CsvLayout,
    series: Series,
    frames: &[jdtc::sim::MetricsFrame],
) -> Result<(), BoxError> {
    let file = File::create(path).map_err(|e| format!("cannot create {}: {e}", path.display()))?;
    let mut w = BufWriter::new(file);
    write_csv(&mut w, info, layout, series, frames)?;
    w.flush()?;
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), BoxError> {
    let config = effective_config(args)?;
    let scenario = Scenario::from_config(&config)?;
    let kind = match args.filter {
        Filter::Centralized => FilterKind::Centralized,
        Filter::Distributed => FilterKind::Distributed,
    };
    if kind == FilterKind::Distributed && !scenario.graph.is_connected() {
        log::warn!("the communication graph is not connected");
    }
    let result: MonteCarloResult = monte_carlo(&scenario, kind, config.run.trials, config.run.seed)?;
    let layout = CsvLayout::new(&scenario.library);
    let info = RunInfo { config: &config, trials: config.run.trials, seed: config.run.seed };
    match kind {
        FilterKind::Centralized => write_file(&args.out, info, &layout, Series::Centralized, &result.average)?,
        FilterKind::Distributed => {
            write_file(&args.out, info, &layout, Series::NetworkAverage, &result.average)?;
            for (node, frames) in &result.nodes {
                write_file(&node_path(&args.out, node.0), info, &layout, Series::Node(*node), frames)?;
            }
        }
    }
    let window =
        scenario.existence_window().map_or_else(|| "no target".to_owned(), |(a, b)| format!("k in [{a}, {b}]"));
    println!(
        "mean OSPA ({window}): {:.3} m, final class decision rate: {:.3}",
        result.summary.mean_ospa, result.summary.class_decision_rate
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => run(args),
        Command::Preset { name } => match ScenarioConfig::preset(name) {
            Some(c) => {
                print!("{}", c.to_toml_string());
                Ok(())
            }
            None => Err(format!("unknown preset `{name}`").into()),
        },
        Command::Check { config } => parse_config(config).map(|c| print!("{}", c.to_toml_string())).map_err(Into::into),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
