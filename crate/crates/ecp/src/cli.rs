use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ecp_core::data::IndicatorKind;
use ecp_core::frontier::{ThresholdPolicy, ValueKind};
use ecp_core::spatial::DEFAULT_QUANTILES;
use ecp_core::strategy::{Schedule, StrategyInstance};

use crate::error::{Result, ServiceError};
use crate::query::{self, LiftSignal, Recompute, WhatIfRequest};
use crate::workspace::{read_input, Inputs, Workspace, DEFAULT_EDGE_THRESHOLD, DEFAULT_RCA_THRESHOLD};
use crate::render;

#[derive(Debug, Parser)]
#[command(name = "ecp", version, about = "Relatedness, complexity and diversification strategy analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a workspace from a location,activity,period,value table.
    Ingest {
        trade: PathBuf,
        #[arg(long)]
        indicators: Option<PathBuf>,
        /// Indicator kind: gini, emission_intensity or other.
        #[arg(long, default_value = "gini", value_parser = parse_kind)]
        kind: IndicatorKind,
        #[arg(long)]
        adjacency: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_RCA_THRESHOLD, allow_negative_numbers = true)]
        rca_threshold: f64,
        #[arg(long, default_value_t = DEFAULT_EDGE_THRESHOLD, allow_negative_numbers = true)]
        edge_threshold: f64,
        /// Analysis period; the latest period by default.
        #[arg(long)]
        period: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relatedness-value diagram for one location.
    Frontier {
        workspace: PathBuf,
        #[arg(long)]
        location: String,
        #[arg(long, default_value = "pci", value_parser = parse_value_kind)]
        value: ValueKind,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long)]
        relatedness_threshold: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        value_threshold: Option<f64>,
    },
    /// Locations placed by relatedness to one activity and by ECI.
    Locations {
        workspace: PathBuf,
        #[arg(long)]
        activity: String,
    },
    /// Neighbor ECI gradients per location.
    Gradients {
        workspace: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Entry lift of a relatedness signal between two periods.
    Lift {
        workspace: PathBuf,
        #[arg(long, value_enum, default_value = "omega")]
        signal: SignalArg,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        #[arg(long, default_value_t = DEFAULT_QUANTILES)]
        quantiles: usize,
    },
    /// Diagram for a location with hypothetical extra specializations.
    Whatif {
        workspace: PathBuf,
        #[arg(long)]
        location: String,
        /// Activities to add; repeat or separate with commas.
        #[arg(long, value_delimiter = ',')]
        add: Vec<String>,
        #[arg(long, default_value = "pci", value_parser = parse_value_kind)]
        value: ValueKind,
        #[arg(long, value_enum, default_value = "frozen")]
        recompute: RecomputeArg,
    },
    /// Evaluate a diversification policy on a strategy instance.
    Simulate {
        instance: PathBuf,
        /// greedy, optimal, lookahead:K or order:<file>
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        confidence: Option<f64>,
    },
    /// Related/unrelated budget split for an ECI value.
    Portfolio {
        #[arg(long, allow_negative_numbers = true)]
        eci: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        peak: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        width: f64,
        #[arg(long, default_value_t = 0.5)]
        max_unrelated: f64,
    },
    /// Serve workspaces over HTTP.
    Serve {
        #[arg(long, env = "ECP_WORKSPACE_DIR", default_value = ".")]
        workspace_dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Simulations allowed to run at once.
        #[arg(long)]
        sim_workers: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignalArg {
    Omega,
    Geo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecomputeArg {
    Frozen,
    Full,
}

fn parse_kind(s: &str) -> std::result::Result<IndicatorKind, String> {
    s.parse().map_err(|e: ecp_core::Error| e.to_string())
}

fn parse_value_kind(s: &str) -> std::result::Result<ValueKind, String> {
    match s.parse() {
        Ok(ValueKind::Custom) => Err("custom values are not stored in workspaces".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(format!("{e}")),
    }
}

fn open(dir: &Path) -> Result<Workspace> {
    Workspace::load(dir)
}

/// Reads an order file: a JSON array of ids, or ids separated by commas or
/// whitespace.
fn read_order(path: &Path) -> Result<Vec<String>> {
    let text = read_input(path)?;
    if let Ok(ids) = serde_json::from_str::<Vec<String>>(&text) {
        return Ok(ids);
    }
    Ok(text.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(String::from).collect())
}

/// Strategy instance from a file with CLI overrides applied.
pub fn load_instance(
    path: &Path,
    policy: Option<&str>,
    trials: Option<u64>,
    seed: Option<u64>,
    confidence: Option<f64>,
) -> Result<StrategyInstance> {
    let text = read_input(path)?;
    let mut instance: StrategyInstance = serde_json::from_str(&text)
        .map_err(|e| ServiceError::invalid(format!("{}: {e}", path.display())))?;
    if let Some(policy) = policy {
        match policy.strip_prefix("order:") {
            Some(file) => {
                let file = Path::new(file);
                let file = if file.is_relative() && !file.exists() {
                    path.parent().unwrap_or(Path::new(".")).join(file)
                } else {
                    file.to_path_buf()
                };
                instance.params.order = Some(read_order(&file)?);
                instance.policy = "order".into();
            }
            None => instance.policy = policy.to_string(),
        }
    }
    if trials.is_some() {
        instance.params.trials = trials;
    }
    if seed.is_some() {
        instance.params.seed = seed;
    }
    if confidence.is_some() {
        instance.params.confidence = confidence;
    }
    Ok(instance)
}

/// Runs every command except `serve` and returns what goes to stdout.
pub fn run(command: Command) -> Result<String> {
    match command {
        Command::Ingest { trade, indicators, kind, adjacency, rca_threshold, edge_threshold, period, out } => {
            let inputs = Inputs {
                trade: read_input(&trade)?,
                indicators: match &indicators {
                    Some(p) => Some((read_input(p)?, kind)),
                    None => None,
                },
                adjacency: adjacency.as_deref().map(read_input).transpose()?,
            };
            let ws = Workspace::build(&inputs, rca_threshold, edge_threshold, period.as_deref()).map_err(|e| {
                if e.code == "parse_error" { e.in_file(&trade) } else { e }
            })?;
            ws.write(&out)?;
            Ok(render(&ws.manifest))
        }
        Command::Frontier { workspace, location, value, format, relatedness_threshold, value_threshold } => {
            let ws = open(&workspace)?;
            let policy = ThresholdPolicy { relatedness: relatedness_threshold, value: value_threshold };
            let d = query::frontier(&ws, &location, value, policy)?;
            Ok(match format {
                Format::Json => render(&d),
                Format::Csv => d.to_csv(),
            })
        }
        Command::Locations { workspace, activity } => {
            Ok(render(&query::locations(&open(&workspace)?, &activity, ThresholdPolicy::default())?))
        }
        Command::Gradients { workspace, format } => {
            let g = query::gradients(&open(&workspace)?)?;
            Ok(match format {
                Format::Json => render(&g),
                Format::Csv => g.to_csv(),
            })
        }
        Command::Lift { workspace, signal, from, to, quantiles } => {
            let signal = match signal {
                SignalArg::Omega => LiftSignal::Omega,
                SignalArg::Geo => LiftSignal::Geo,
            };
            Ok(render(&query::lift(&open(&workspace)?, signal, from.as_deref(), to.as_deref(), quantiles)?))
        }
        Command::Whatif { workspace, location, add, value, recompute } => {
            let req = WhatIfRequest {
                location,
                add,
                value,
                recompute: match recompute {
                    RecomputeArg::Frozen => Recompute::Frozen,
                    RecomputeArg::Full => Recompute::Full,
                },
            };
            Ok(render(&query::whatif(&open(&workspace)?, &req)?))
        }
        Command::Simulate { instance, policy, trials, seed, confidence } => {
            let instance = load_instance(&instance, policy.as_deref(), trials, seed, confidence)?;
            Ok(render(&query::simulate(&instance)?))
        }
        Command::Portfolio { eci, peak, width, max_unrelated } => {
            Ok(render(&query::portfolio(eci, Schedule { peak, width, max_unrelated })?))
        }
        Command::Serve { .. } => Err(ServiceError::invalid("serve runs through `main`")),
    }
}

pub fn serve_address(host: IpAddr, port: u16) -> SocketAddr {
    SocketAddr::new(host, port)
}
