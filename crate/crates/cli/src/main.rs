use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use mfpo::dp::OptimizerMode;
use mfpo::exec::{set_execution, Execution};
use mfpo::experiments::{
    dump_riccati, run_lq_benchmark, run_portfolio, write_lq_outputs, write_portfolio_outputs, ExperimentConfig,
    GridCache,
};

/// Quantized dynamic programming for partially observed mean-field control.
#[derive(Parser, Debug)]
#[command(name = "mfpo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Quantized value against the closed-form value for each grid size.
    BenchLq {
        #[command(flatten)]
        common: Common,
        /// Also write wall-clock timings (not reproducible).
        #[arg(long)]
        timings: bool,
    },
    /// Mean-variance portfolio tables for every risk aversion.
    BenchPortfolio {
        #[command(flatten)]
        common: Common,
    },
    /// Build the Lloyd grids once and store them in the output directory.
    QuantizeCache {
        #[command(flatten)]
        common: Common,
    },
    /// Write the Riccati coefficients of the LQ model.
    DumpRiccati {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// JSON or TOML configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the number of simulated paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Overrides the optimizer over control maps.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<OptimizerMode>,
    /// Run every loop on the calling thread.
    #[arg(long)]
    sequential: bool,
}

fn parse_mode(s: &str) -> std::result::Result<OptimizerMode, String> {
    s.parse().map_err(|e: mfpo::Error| e.to_string())
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(paths) = self.paths {
            cfg.lq.check_paths = paths;
            cfg.portfolio.n_paths = vec![paths];
        }
        if let Some(mode) = self.mode {
            cfg.lq.optimizer = mode;
            cfg.portfolio.optimizer = mode;
        }
        cfg.validate()?;
        set_execution(if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        });
        log::info!("config hash {}, seed {}", cfg.hash(), cfg.seed);
        Ok(cfg)
    }
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn cached(out: &Path, cfg: &ExperimentConfig) -> Result<Option<GridCache>> {
    let cache = GridCache::load(out, cfg)?;
    if cache.is_some() {
        log::info!("using cached grids in {}", out.display());
    }
    Ok(cache)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::BenchLq { common, timings } => {
            let cfg = common.load()?;
            let cache = cached(&common.out, &cfg)?;
            let rep = run_lq_benchmark(&cfg, cache.as_ref())?;
            report(&write_lq_outputs(&rep, &common.out, timings)?);
        }
        Command::BenchPortfolio { common } => {
            let cfg = common.load()?;
            let cache = cached(&common.out, &cfg)?;
            let rep = run_portfolio(&cfg, cache.as_ref())?;
            report(&write_portfolio_outputs(&rep, &common.out)?);
        }
        Command::QuantizeCache { common } => {
            let cfg = common.load()?;
            let cache = GridCache::build(&cfg)?;
            report(&[cache.write(&common.out, &cfg)?]);
        }
        Command::DumpRiccati { common } => {
            let cfg = common.load()?;
            report(&[dump_riccati(&cfg, &common.out)?]);
        }
    }
    Ok(())
}
