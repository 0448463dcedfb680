use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_json, ExperimentConfig, GridCache, Provenance};
use crate::dp::{quantized_dp, ClosedLoopPolicy, QuantizedProblem};
use crate::error::Result;
use crate::model::portfolio_model;
use crate::quantize::{codebook_build, lloyd_gaussian, CodebookReport, Grids, LloydOptions, MonteCarloKernels};
use crate::rng::derive_seed;
use crate::simkit::{baselines, bootstrap_criterion, bootstrap_difference, simulate_batch, BootstrapSummary, Strategy};

/// Relative floor on the spread of a per-time grid; keeps centers distinct
/// when the pilot marginal is a point mass.
const MIN_RELATIVE_SPREAD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyStats {
    pub mean: f64,
    /// Unbiased variance of terminal wealth.
    pub variance: f64,
    /// `(gamma/2) variance - mean`.
    pub criterion: f64,
    pub criterion_se: f64,
}

/// Results for one risk aversion and batch size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortfolioTable {
    pub gamma: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub proposed: StrategyStats,
    pub buy_and_hold: StrategyStats,
    pub trending: StrategyStats,
    /// Paired bootstrap of proposed minus buy-and-hold criterion.
    pub proposed_minus_buy_and_hold: BootstrapSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSolution {
    pub gamma: f64,
    pub dp_value: f64,
    pub policy: ClosedLoopPolicy,
    pub codebook: CodebookReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortfolioReport {
    pub provenance: Provenance,
    pub grids: Grids,
    pub solutions: Vec<GammaSolution>,
    pub tables: Vec<PortfolioTable>,
}

/// Per-time grids: a unit Lloyd grid moved to the mean and scaled by the
/// standard deviation of a pilot batch at each time. The pilot holds the
/// largest allocation, so the grids span the spread every control can reach.
pub fn portfolio_grids(config: &ExperimentConfig) -> Result<Grids> {
    let p = &config.portfolio;
    let opts = LloydOptions {
        max_iters: p.lloyd.max_iters,
        tol: p.lloyd.tol,
        seed: derive_seed(config.seed, &[0x11, p.grid_size as u64, 1]),
    };
    let unit = lloyd_gaussian(1, p.grid_size, p.lloyd.mc_samples, &opts)?.grid;
    let model = portfolio_model(&p.params(p.gammas[0]))?;
    let widest = p.controls.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let pilot = simulate_batch(
        &model,
        &Strategy::Constant(vec![widest]),
        p.pilot_paths,
        derive_seed(config.seed, &[0x9170]),
    )?;
    let place = |mean: f64, sd: f64| {
        let spread = sd.max(MIN_RELATIVE_SPREAD * mean.abs().max(1.0));
        unit.affine(&[mean], &[spread])
    };
    let hidden = pilot
        .marginals
        .iter()
        .map(|m| place(m.hidden_mean[0], m.hidden_sd[0]))
        .collect::<Result<_>>()?;
    let obs = pilot
        .marginals
        .iter()
        .map(|m| place(m.obs_mean[0], m.obs_sd[0]))
        .collect::<Result<_>>()?;
    Grids::per_time(hidden, obs)
}

fn stats(
    xs: &[f64],
    gamma: f64,
    resamples: usize,
    seed: u64,
    criterion: f64,
    mean: f64,
    variance: f64,
) -> StrategyStats {
    StrategyStats {
        mean,
        variance,
        criterion,
        criterion_se: bootstrap_criterion(xs, gamma, resamples, seed).se,
    }
}

/// Quantized-DP strategy against buy-and-hold and trending for every risk
/// aversion and batch size. The three strategies of one table share noise.
pub fn run_portfolio(config: &ExperimentConfig, cache: Option<&GridCache>) -> Result<PortfolioReport> {
    config.validate()?;
    let p = &config.portfolio;
    let grids = match cache {
        Some(c) => c.portfolio.clone(),
        None => portfolio_grids(config)?,
    };
    let base = portfolio_model(&p.params(p.gammas[0]))?;
    let kernels = MonteCarloKernels::new(&base, &grids, p.n_mc, derive_seed(config.seed, &[0x4e, 0x90]))?;
    let m0 = base.quantized_initial(&grids, p.n_mc, derive_seed(config.seed, &[0x10, 0x90]))?;
    let mut solutions = Vec::new();
    let mut tables = Vec::new();
    for (g, &gamma) in p.gammas.iter().enumerate() {
        let model = portfolio_model(&p.params(gamma))?;
        let problem = QuantizedProblem::new(&model, &grids, &kernels, m0.clone())?;
        let opts = p
            .codebook
            .options(p.optimizer, derive_seed(config.seed, &[0xcb, g as u64]));
        let (codebook, report) = codebook_build(&problem, &opts)?;
        let sol = quantized_dp(&problem, &codebook, p.optimizer)?;
        log::info!("gamma {gamma}: dp value {}, policy {:?}", sol.value, sol.policy.maps);
        let proposed = Strategy::Quantized {
            policy: sol.policy.clone(),
            grids: grids.clone(),
        };
        for &n_paths in &p.n_paths {
            let seed = derive_seed(config.seed, &[0x5a, g as u64, n_paths as u64]);
            let [(_, bh), (_, tr)] = baselines();
            let mut out = Vec::new();
            for strategy in [&proposed, &bh, &tr] {
                let batch = simulate_batch(&model, strategy, n_paths, seed)?;
                let xs: Vec<f64> = batch.terminal.iter().map(|x| x[0]).collect();
                let st = stats(
                    &xs,
                    gamma,
                    p.bootstrap_resamples,
                    derive_seed(seed, &[0xb0]),
                    batch.criterion.expect("portfolio model is mean-variance"),
                    batch.mean_terminal[0],
                    batch.var_terminal[0],
                );
                out.push((xs, st));
            }
            let diff = bootstrap_difference(
                &out[0].0,
                &out[1].0,
                gamma,
                p.bootstrap_resamples,
                derive_seed(seed, &[0xd1]),
            )?;
            let mut it = out.into_iter().map(|(_, s)| s);
            tables.push(PortfolioTable {
                gamma,
                n_paths,
                seed,
                proposed: it.next().expect("three strategies"),
                buy_and_hold: it.next().expect("three strategies"),
                trending: it.next().expect("three strategies"),
                proposed_minus_buy_and_hold: diff,
            });
        }
        solutions.push(GammaSolution {
            gamma,
            dp_value: sol.value,
            policy: sol.policy,
            codebook: report,
        });
    }
    Ok(PortfolioReport {
        provenance: Provenance::new(config, p.n_mc),
        grids,
        solutions,
        tables,
    })
}

type Row = (&'static str, fn(&StrategyStats) -> f64);

/// Writes one table per risk aversion and batch size, a long-form summary and
/// the JSON report.
pub fn write_portfolio_outputs(report: &PortfolioReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let hash = &report.provenance.config_hash;
    let seed = report.provenance.seed.to_string();
    let mut written = Vec::new();
    for t in &report.tables {
        let path = dir.join(format!("portfolio_gamma_{}_paths_{}.csv", t.gamma, t.n_paths));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "statistic",
            "proposed",
            "buy_and_hold",
            "trending",
            "config_hash",
            "seed",
        ])?;
        let cols = [&t.proposed, &t.buy_and_hold, &t.trending];
        let rows: [Row; 4] = [
            ("E", |s| s.mean),
            ("Var", |s| s.variance),
            ("V0", |s| s.criterion),
            ("V0_bootstrap_se", |s| s.criterion_se),
        ];
        for (name, get) in rows {
            let mut rec = vec![name.to_string()];
            rec.extend(cols.iter().map(|s| get(s).to_string()));
            rec.push(hash.clone());
            rec.push(seed.clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        written.push(path);
    }
    let path = dir.join("portfolio_summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "gamma",
        "n_paths",
        "strategy",
        "mean",
        "variance",
        "v0",
        "v0_bootstrap_se",
        "config_hash",
        "seed",
    ])?;
    for t in &report.tables {
        for (name, s) in [
            ("proposed", &t.proposed),
            ("buy_and_hold", &t.buy_and_hold),
            ("trending", &t.trending),
        ] {
            w.write_record([
                t.gamma.to_string(),
                t.n_paths.to_string(),
                name.to_string(),
                s.mean.to_string(),
                s.variance.to_string(),
                s.criterion.to_string(),
                s.criterion_se.to_string(),
                hash.clone(),
                seed.clone(),
            ])?;
        }
    }
    w.flush()?;
    written.push(path);
    let json = dir.join("portfolio_report.json");
    write_json(&json, report)?;
    written.push(json);
    Ok(written)
}
