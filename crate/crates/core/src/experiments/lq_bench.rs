use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{write_json, ExperimentConfig, GridCache, Provenance};
use crate::dp::{quantized_dp, ClosedLoopPolicy, QuantizedProblem};
use crate::error::{Error, Result};
use crate::lq_analytic::{riccati_backward, w0_default};
use crate::model::lq_model;
use crate::quantize::{codebook_build, lloyd_gaussian, CodebookReport, Grid, Grids, LloydOptions, MonteCarloKernels};
use crate::rng::derive_seed;
use crate::simkit::{evaluate_policy_cost, Strategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Skipped,
}

/// One grid size of the benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqRow {
    pub n: usize,
    pub quantized_value: Option<f64>,
    pub exact_value: f64,
    pub relative_error: Option<f64>,
    pub codebook: Option<CodebookReport>,
    pub converged: bool,
    pub policy: Option<ClosedLoopPolicy>,
    /// Simulated cost of `policy` on the continuous model with its standard
    /// error.
    pub policy_cost: Option<(f64, f64)>,
    pub status: RowStatus,
    pub reason: Option<String>,
    /// Not serialized so that reports stay reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Simulated cost of the analytic feedback against the analytic value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqSimulationCheck {
    pub paths: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub exact_value: f64,
    pub z_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqBenchmarkReport {
    pub provenance: Provenance,
    pub exact_value: f64,
    pub rows: Vec<LqRow>,
    pub simulation: Option<LqSimulationCheck>,
}

/// Lloyd grid of size `n` for the standard Gaussian in the LQ dimension.
pub fn lq_grid(config: &ExperimentConfig, n: usize) -> Result<Grid> {
    let l = &config.lq.lloyd;
    let opts = LloydOptions {
        max_iters: l.max_iters,
        tol: l.tol,
        seed: derive_seed(config.seed, &[0x11, n as u64]),
    };
    Ok(lloyd_gaussian(config.lq.dim, n, l.mc_samples, &opts)?.grid)
}

fn run_size(config: &ExperimentConfig, n: usize, exact: f64, cache: Option<&GridCache>) -> Result<LqRow> {
    let lq = &config.lq;
    let params = lq.params()?;
    let model = lq_model(&params)?;
    let grid = match cache.and_then(|c| c.lq_grid(n)) {
        Some(g) => g.clone(),
        None => lq_grid(config, n)?,
    };
    let grids = Grids::fixed(grid.clone(), grid);
    let kernels = MonteCarloKernels::new(&model, &grids, lq.n_mc, derive_seed(config.seed, &[0x4e, n as u64]))?;
    let m0 = model.quantized_initial(&grids, lq.n_mc, derive_seed(config.seed, &[0x10, n as u64]))?;
    let problem = QuantizedProblem::new(&model, &grids, &kernels, m0)?;
    let opts = lq
        .codebook
        .options(lq.optimizer, derive_seed(config.seed, &[0xcb, n as u64]));
    let (codebook, report) = codebook_build(&problem, &opts)?;
    let sol = quantized_dp(&problem, &codebook, lq.optimizer)?;
    let policy_cost = if lq.check_paths >= 2 {
        let strategy = Strategy::Quantized {
            policy: sol.policy.clone(),
            grids: grids.clone(),
        };
        let c = evaluate_policy_cost(
            &model,
            &strategy,
            lq.check_paths,
            derive_seed(config.seed, &[0x5d, n as u64]),
            0,
        )?;
        Some((c.estimate, c.std_error))
    } else {
        None
    };
    Ok(LqRow {
        n,
        quantized_value: Some(sol.value),
        exact_value: exact,
        relative_error: Some((sol.value - exact).abs() / exact.abs()),
        codebook: Some(report),
        converged: sol.converged,
        policy: Some(sol.policy),
        policy_cost,
        status: RowStatus::Ok,
        reason: None,
        wall_time_s: 0.0,
    })
}

/// Quantized value against the closed-form value for every grid size.
///
/// Sizes that exceed a computational budget are reported as skipped and the
/// run continues.
pub fn run_lq_benchmark(config: &ExperimentConfig, cache: Option<&GridCache>) -> Result<LqBenchmarkReport> {
    config.validate()?;
    let lq = &config.lq;
    let params = lq.params()?;
    let sol = Arc::new(riccati_backward(&params)?);
    let exact = w0_default(&sol)?;
    let mut rows = Vec::new();
    for &n in &lq.grid_sizes {
        let start = Instant::now();
        let mut row = match run_size(config, n, exact, cache) {
            Ok(row) => row,
            Err(e @ Error::Budget { .. }) => {
                log::warn!("grid size {n} skipped: {e}");
                LqRow {
                    n,
                    quantized_value: None,
                    exact_value: exact,
                    relative_error: None,
                    codebook: None,
                    converged: false,
                    policy: None,
                    policy_cost: None,
                    status: RowStatus::Skipped,
                    reason: Some(e.to_string()),
                    wall_time_s: 0.0,
                }
            }
            Err(e) => return Err(e),
        };
        row.wall_time_s = start.elapsed().as_secs_f64();
        log::info!(
            "N = {n}: quantized {:?}, exact {exact}, relative error {:?}, {:.1}s",
            row.quantized_value,
            row.relative_error,
            row.wall_time_s
        );
        rows.push(row);
    }
    let simulation = if lq.check_paths >= 2 {
        let model = lq_model(&params)?;
        let cost = evaluate_policy_cost(
            &model,
            &Strategy::LqFeedback(sol.clone()),
            lq.check_paths,
            derive_seed(config.seed, &[0x5c]),
            0,
        )?;
        Some(LqSimulationCheck {
            paths: lq.check_paths,
            estimate: cost.estimate,
            std_error: cost.std_error,
            exact_value: exact,
            z_score: (cost.estimate - exact) / cost.std_error,
        })
    } else {
        None
    };
    Ok(LqBenchmarkReport {
        provenance: Provenance::new(config, lq.n_mc),
        exact_value: exact,
        rows,
        simulation,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `lq_benchmark.csv`, `lq_error_vs_n.csv` and `lq_report.json`, and
/// `lq_timings.csv` when `timings` is set (wall times are not reproducible).
pub fn write_lq_outputs(report: &LqBenchmarkReport, dir: &Path, timings: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let hash = &report.provenance.config_hash;
    let seed = report.provenance.seed.to_string();
    let optimizer = report.provenance.config.lq.optimizer.to_string();
    let main = dir.join("lq_benchmark.csv");
    let mut w = csv::Writer::from_path(&main)?;
    w.write_record([
        "n",
        "quantized_value",
        "exact_value",
        "relative_error",
        "codebook_size",
        "reachable",
        "lossless",
        "converged",
        "policy_cost",
        "policy_cost_se",
        "optimizer",
        "status",
        "reason",
        "config_hash",
        "seed",
    ])?;
    for r in &report.rows {
        let cb = r.codebook.as_ref();
        w.write_record([
            r.n.to_string(),
            opt(r.quantized_value),
            r.exact_value.to_string(),
            opt(r.relative_error),
            cb.map(|c| c.size.to_string()).unwrap_or_default(),
            cb.map(|c| {
                c.reachable
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .unwrap_or_default(),
            cb.map(|c| c.lossless.to_string()).unwrap_or_default(),
            r.converged.to_string(),
            opt(r.policy_cost.map(|c| c.0)),
            opt(r.policy_cost.map(|c| c.1)),
            optimizer.clone(),
            format!("{:?}", r.status).to_lowercase(),
            r.reason.clone().unwrap_or_default(),
            hash.clone(),
            seed.clone(),
        ])?;
    }
    w.flush()?;
    let plot = dir.join("lq_error_vs_n.csv");
    let mut w = csv::Writer::from_path(&plot)?;
    w.write_record(["n", "relative_error_percent", "config_hash", "seed"])?;
    for r in report.rows.iter().filter(|r| r.status == RowStatus::Ok) {
        w.write_record([
            r.n.to_string(),
            opt(r.relative_error.map(|e| 100.0 * e)),
            hash.clone(),
            seed.clone(),
        ])?;
    }
    w.flush()?;
    let json = dir.join("lq_report.json");
    write_json(&json, report)?;
    let mut written = vec![main, plot, json];
    if timings {
        let path = dir.join("lq_timings.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["n", "wall_time_s", "config_hash", "seed"])?;
        for r in &report.rows {
            w.write_record([r.n.to_string(), r.wall_time_s.to_string(), hash.clone(), seed.clone()])?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}
