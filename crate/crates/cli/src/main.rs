use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use congestion_core::harness::{
    self, check_bounds, run_experiment, sweep, ExperimentConfig, GameSource, PriceColumns,
};
use congestion_core::routing;
use congestion_core::Error;

#[derive(Parser)]
#[command(name = "congestion-sim", version, about = "Priced congestion game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV series and metadata.
    Run {
        #[command(flatten)]
        common: Common,
        /// Per-resource price columns: comma-separated indices or `all`.
        #[arg(long)]
        emit_prices: Option<PriceColumns>,
    },
    /// Run the cross product of β multipliers and capacities.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.1,1,10")]
        beta_multipliers: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "14,11")]
        capacities: Vec<f64>,
        #[arg(long)]
        emit_prices: Option<PriceColumns>,
    },
    /// Generate a routing game and print it as JSON.
    GenGame {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment and check the price certificate and the
    /// expected-violation bound.
    CheckBounds {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults to the reference setup.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    no_pricing: bool,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Check,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Contract(_) => Failure::Config(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::reference());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(Failure::Config)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))
        .map_err(Failure::Config)
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(reps) = self.replications {
            cfg.replications = reps;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        if self.no_pricing {
            cfg.pricing_enabled = false;
        }
        cfg.resolve()?;
        Ok(cfg)
    }
}

fn output_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| PathBuf::from("results.csv"))
}

fn create_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Runtime),
        _ => Ok(()),
    }
}

fn cell_path(path: &Path, multiplier: f64, capacity: f64) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}.beta{multiplier}.cap{capacity}.{ext}"))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            common,
            emit_prices,
        } => {
            let cfg = common.resolve()?;
            let result = run_experiment(&cfg)?;
            let path = output_path(&cfg);
            create_parent(&path)?;
            harness::write_result(&result, &path, &emit_prices.unwrap_or_default())?;
            println!(
                "{} replications, mean ACV(n)/n = {:.6}, mean AD(n)/n = {:.6}, wrote {}",
                result.replications.len(),
                result.mean_final_acv_avg(),
                result.mean_final_ad_avg(),
                path.display()
            );
        }
        Command::Sweep {
            common,
            beta_multipliers,
            capacities,
            emit_prices,
        } => {
            let cfg = common.resolve()?;
            let cells = sweep(&cfg, &beta_multipliers, &capacities)?;
            let path = output_path(&cfg);
            create_parent(&path)?;
            let columns = emit_prices.unwrap_or_default();
            for cell in &cells {
                let p = cell_path(&path, cell.beta_multiplier, cell.capacity);
                harness::write_result(&cell.result, &p, &columns)?;
                println!(
                    "beta = {}γ, capacity = {}: mean ACV(n)/n = {:.6}, mean AD(n)/n = {:.6}, wrote {}",
                    cell.beta_multiplier,
                    cell.capacity,
                    cell.result.mean_final_acv_avg(),
                    cell.result.mean_final_ad_avg(),
                    p.display()
                );
            }
        }
        Command::GenGame { config, seed, out } => {
            let cfg = load_config(config.as_deref())?;
            let params = match cfg.game {
                GameSource::Routing(p) => p,
                GameSource::Inline(_) => {
                    return Err(Failure::Config(anyhow::anyhow!(
                        "gen-game needs a routing game source"
                    )))
                }
            };
            let instance = routing::generate(&params, seed.unwrap_or(cfg.seed))?;
            match out {
                Some(path) => {
                    create_parent(&path)?;
                    harness::write_json(&instance, &path)?;
                }
                None => println!(
                    "{}",
                    serde_json::to_string_pretty(&instance)
                        .map_err(|e| Failure::Runtime(e.into()))?
                ),
            }
        }
        Command::CheckBounds { common } => {
            let cfg = common.resolve()?;
            let result = run_experiment(&cfg)?;
            let check = check_bounds(&result);
            for line in &check.lines {
                println!("{line}");
            }
            if let Some(path) = &cfg.output {
                create_parent(path)?;
                harness::write_json(&check, path)?;
            }
            if !check.passed {
                return Err(Failure::Check);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Check) => {
            eprintln!("bound check failed");
            ExitCode::from(3)
        }
    }
}
