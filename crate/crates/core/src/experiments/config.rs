use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dp::OptimizerMode;
use crate::error::{Error, Result};
use crate::linalg::matrix_from_rows;
use crate::model::{LqParams, PortfolioParams};
use crate::quantize::CodebookOptions;

pub const SCHEMA_VERSION: &str = "v1";

/// Top-level experiment configuration, read from JSON or TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lq: LqConfig,
    #[serde(default)]
    pub portfolio: PortfolioConfig,
}

fn schema_version() -> String {
    SCHEMA_VERSION.to_string()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema: schema_version(),
            seed: 20240607,
            lq: LqConfig::default(),
            portfolio: PortfolioConfig::default(),
        }
    }
}

/// Settings of Lloyd's algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LloydConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Monte Carlo sample size used for targets of dimension above two.
    pub mc_samples: usize,
}

impl Default for LloydConfig {
    fn default() -> Self {
        LloydConfig {
            max_iters: 500,
            tol: 1e-12,
            mc_samples: 100_000,
        }
    }
}

/// Settings of the codebook of joint laws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookConfig {
    pub cap: usize,
    pub rounds: usize,
    pub max_pool: usize,
    pub cluster_iters: usize,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        CodebookConfig {
            cap: 384,
            rounds: 3,
            max_pool: 48,
            cluster_iters: 25,
        }
    }
}

impl CodebookConfig {
    pub fn options(&self, mode: OptimizerMode, seed: u64) -> CodebookOptions {
        CodebookOptions {
            cap: self.cap,
            mode,
            rounds: self.rounds,
            max_pool: self.max_pool,
            cluster_iters: self.cluster_iters,
            seed,
        }
    }
}

/// Time-invariant linear-quadratic benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqConfig {
    pub dim: usize,
    pub horizon: usize,
    pub b: Vec<Vec<f64>>,
    pub b_bar: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub j: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub q_bar: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub initial_mean_x: Vec<f64>,
    pub initial_mean_y: Vec<f64>,
    pub grid_sizes: Vec<usize>,
    pub n_mc: usize,
    pub optimizer: OptimizerMode,
    pub lloyd: LloydConfig,
    pub codebook: CodebookConfig,
    /// Paths used to check the analytic value by simulation.
    pub check_paths: usize,
}

impl Default for LqConfig {
    fn default() -> Self {
        let upper = vec![vec![1.0, 1.0], vec![0.0, 1.0]];
        let ones = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let zeros = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        LqConfig {
            dim: 2,
            horizon: 3,
            b: zeros.clone(),
            b_bar: zeros,
            d: upper.clone(),
            j: upper,
            q: ones.clone(),
            q_bar: ones,
            r: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            controls: vec![vec![-2.0, -2.0], vec![-1.0, -1.0], vec![1.0, 1.0], vec![2.0, 2.0]],
            initial_mean_x: vec![0.0, 0.0],
            initial_mean_y: vec![0.0, 0.0],
            grid_sizes: vec![2, 4, 10, 20],
            n_mc: 10_000,
            optimizer: OptimizerMode::Auto,
            lloyd: LloydConfig::default(),
            codebook: CodebookConfig::default(),
            check_paths: 100_000,
        }
    }
}

impl LqConfig {
    pub fn params(&self) -> Result<LqParams> {
        let m = |rows: &Vec<Vec<f64>>, what| matrix_from_rows(rows, what);
        LqParams::time_invariant(
            self.horizon,
            m(&self.b, "b")?,
            m(&self.b_bar, "b_bar")?,
            m(&self.d, "d")?,
            m(&self.j, "j")?,
            m(&self.q, "q")?,
            m(&self.q_bar, "q_bar")?,
            m(&self.r, "r")?,
            self.controls.clone(),
        )?
        .with_initial_means(self.initial_mean_x.clone(), self.initial_mean_y.clone())
        .and_then(|p| {
            if p.dim == self.dim {
                Ok(p)
            } else {
                Err(Error::config("lq.dim does not match the matrices"))
            }
        })
    }
}

/// Mean-variance portfolio experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioConfig {
    pub drift: f64,
    pub volatility: f64,
    pub dt: f64,
    pub horizon: usize,
    pub controls: Vec<f64>,
    pub initial_wealth: f64,
    pub initial_obs: f64,
    pub obs_noise_std: f64,
    pub gammas: Vec<f64>,
    pub grid_size: usize,
    pub n_paths: Vec<usize>,
    /// Paths of the pilot batch that positions the per-time grids.
    pub pilot_paths: usize,
    pub n_mc: usize,
    pub bootstrap_resamples: usize,
    pub optimizer: OptimizerMode,
    pub lloyd: LloydConfig,
    pub codebook: CodebookConfig,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        let p = PortfolioParams::default();
        PortfolioConfig {
            drift: p.drift,
            volatility: p.volatility,
            dt: p.dt,
            horizon: p.horizon,
            controls: p.controls,
            initial_wealth: p.initial_wealth,
            initial_obs: p.initial_obs,
            obs_noise_std: p.obs_noise_std,
            gammas: vec![2.0, 4.0, 8.0, 16.0],
            grid_size: 2,
            n_paths: vec![250, 10_000],
            pilot_paths: 10_000,
            n_mc: 10_000,
            bootstrap_resamples: 100,
            optimizer: OptimizerMode::Auto,
            lloyd: LloydConfig::default(),
            codebook: CodebookConfig::default(),
        }
    }
}

impl PortfolioConfig {
    pub fn params(&self, gamma: f64) -> PortfolioParams {
        PortfolioParams {
            drift: self.drift,
            volatility: self.volatility,
            dt: self.dt,
            risk_aversion: gamma,
            horizon: self.horizon,
            controls: self.controls.clone(),
            initial_wealth: self.initial_wealth,
            initial_obs: self.initial_obs,
            obs_noise_std: self.obs_noise_std,
        }
    }
}

impl ExperimentConfig {
    /// Reads a `.json` or `.toml` file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            Some("toml") => toml::from_str(&text).map_err(|e| Error::Toml(e.to_string()))?,
            _ => return Err(Error::config("config file must end in .json or .toml")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema version {:?}, expected {SCHEMA_VERSION:?}",
                self.schema
            )));
        }
        self.lq.params()?;
        self.portfolio.params(1.0).validate()?;
        if self.portfolio.n_paths.iter().any(|&n| n < 2) || self.portfolio.gammas.is_empty() {
            return Err(Error::config("portfolio needs gammas and at least two paths per batch"));
        }
        Ok(())
    }

    /// Canonical JSON with every default spelled out.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml_and_json() {
        let cfg = ExperimentConfig::default();
        let t: ExperimentConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        let j: ExperimentConfig = serde_json::from_str(&cfg.canonical_json()).unwrap();
        assert_eq!(t, cfg);
        assert_eq!(j, cfg);
        assert_eq!(t.hash(), cfg.hash());
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let cfg = ExperimentConfig {
            schema: "v0".into(),
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
