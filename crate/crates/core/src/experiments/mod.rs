//! Experiment drivers behind the command-line tool: the linear-quadratic
//! benchmark, the portfolio study, grid caching and the Riccati dump.

mod config;
mod lq_bench;
mod portfolio;

pub use config::{CodebookConfig, ExperimentConfig, LloydConfig, LqConfig, PortfolioConfig, SCHEMA_VERSION};
pub use lq_bench::{
    lq_grid, run_lq_benchmark, write_lq_outputs, LqBenchmarkReport, LqRow, LqSimulationCheck, RowStatus,
};
pub use portfolio::{
    portfolio_grids, run_portfolio, write_portfolio_outputs, PortfolioReport, PortfolioTable, StrategyStats,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Result;
use crate::lq_analytic::{riccati_backward, w0_default};
use crate::quantize::{Grid, Grids};

/// Where an output came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema: String,
    pub crate_version: String,
    pub git_revision: String,
    pub config_hash: String,
    pub seed: u64,
    pub n_mc: usize,
    pub config: ExperimentConfig,
}

impl Provenance {
    pub fn new(config: &ExperimentConfig, n_mc: usize) -> Self {
        Provenance {
            schema: SCHEMA_VERSION.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            git_revision: git_revision(),
            config_hash: config.hash(),
            seed: config.seed,
            n_mc,
            config: config.clone(),
        }
    }
}

/// Current commit of the working directory, or `unknown`.
pub fn git_revision() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "--short=12", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Lloyd grids used by the experiments, cached by configuration hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCache {
    pub config_hash: String,
    pub lq: Vec<(usize, Grid)>,
    pub portfolio: Grids,
}

impl GridCache {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let lq = config
            .lq
            .grid_sizes
            .iter()
            .map(|&n| Ok((n, lq_grid(config, n)?)))
            .collect::<Result<_>>()?;
        Ok(GridCache {
            config_hash: config.hash(),
            lq,
            portfolio: portfolio_grids(config)?,
        })
    }

    pub fn path(dir: &Path, config: &ExperimentConfig) -> PathBuf {
        dir.join(format!("grid_cache_{}.json", config.hash()))
    }

    /// Loads the cache for `config` from `dir` if present and matching.
    pub fn load(dir: &Path, config: &ExperimentConfig) -> Result<Option<Self>> {
        let path = Self::path(dir, config);
        if !path.exists() {
            return Ok(None);
        }
        let cache: GridCache = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok((cache.config_hash == config.hash()).then_some(cache))
    }

    pub fn lq_grid(&self, n: usize) -> Option<&Grid> {
        self.lq.iter().find(|(k, _)| *k == n).map(|(_, g)| g)
    }

    pub fn write(&self, dir: &Path, config: &ExperimentConfig) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = Self::path(dir, config);
        write_json(&path, self)?;
        Ok(path)
    }
}

/// Writes the Riccati coefficients and `W_0` with provenance.
pub fn dump_riccati(config: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let params = config.lq.params()?;
    let sol = riccati_backward(&params)?;
    std::fs::create_dir_all(out)?;
    let path = out.join("riccati.json");
    write_json(
        &path,
        &json!({
            "provenance": Provenance::new(config, config.lq.n_mc),
            "w0": w0_default(&sol)?,
            "riccati": sol.to_json(),
        }),
    )?;
    Ok(path)
}
