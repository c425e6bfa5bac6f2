use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hagps::experiment::{cmd_eval, cmd_ingest, cmd_report, cmd_train, Mode, RunConfig};
use hagps::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "hagps",
    version,
    about = "Bike rebalancing with hierarchical adaptive parameter sharing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Overrides applied on top of the configuration file.
#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// hagps, no-share, share-all or static-groups.
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    no_id: bool,
    #[arg(long, global = true)]
    no_splitmerge: bool,
    #[arg(long, global = true)]
    no_hier: bool,
    #[arg(long, global = true)]
    no_arp: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate a trip file into a demand artifact.
    Ingest {
        /// Trip CSV; defaults to `data.trips` from the configuration.
        #[arg(long)]
        trips: Option<PathBuf>,
    },
    /// Train one configuration and write a run directory.
    Train,
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Demand artifact; defaults to the configured data source.
        #[arg(long)]
        demand: Option<PathBuf>,
    },
    /// Comparison table over finished run directories.
    Report { runs: Vec<PathBuf> },
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(mode) = &common.mode {
        cfg.mode = Mode::parse(mode)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.ablations.no_id |= common.no_id;
    cfg.ablations.no_splitmerge |= common.no_splitmerge;
    cfg.ablations.no_hier |= common.no_hier;
    cfg.ablations.no_arp |= common.no_arp;
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    let mut cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Ingest { trips } => {
            let trips = trips
                .or_else(|| cfg.data.trips.clone())
                .ok_or_else(|| Error::Config("ingest needs --trips or data.trips".into()))?;
            let grid = cfg
                .grid
                .clone()
                .ok_or_else(|| Error::Config("ingest needs a [grid] section".into()))?;
            let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let report = cmd_ingest(&trips, &grid, cfg.data.static_features.as_deref(), &out)?;
            Ok(serde_json::to_value(report)?)
        }
        Command::Train => Ok(serde_json::to_value(cmd_train(&cfg)?)?),
        Command::Eval { checkpoint, demand } => {
            if let Some(path) = demand {
                cfg.data.demand = Some(path);
                cfg.data.synthetic = None;
            }
            Ok(serde_json::to_value(cmd_eval(&checkpoint, &cfg)?)?)
        }
        Command::Report { runs } => Ok(serde_json::to_value(cmd_report(
            &runs,
            cfg.out.as_deref(),
        )?)?),
    }
}

fn error_record(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_record("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(value) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&value).unwrap_or_default()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
