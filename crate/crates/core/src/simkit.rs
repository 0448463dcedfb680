//! Batch simulation of the controlled model.
//!
//! Paths advance in lockstep; the mean-field argument at each step is the
//! empirical law of the batch. Each path draws from its own stream keyed by
//! `(seed, path index)`, so results do not depend on scheduling.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dp::ClosedLoopPolicy;
use crate::error::{Error, Result};
use crate::exec;
use crate::lq_analytic::{feedback_posterior, optimal_feedback, RiccatiSolution};
use crate::model::{HiddenLaw, ModelSpec};
use crate::quantize::Grids;
use crate::rng::{self, StreamRng};

/// A rule mapping the observed history of one path (and batch statistics)
/// to a control.
#[derive(Clone, Debug)]
pub enum Strategy {
    /// Closed-loop policy on observation cells.
    Quantized {
        policy: ClosedLoopPolicy,
        grids: Grids,
    },
    /// Optimal linear-quadratic feedback with Gaussian posterior means.
    LqFeedback(Arc<RiccatiSolution>),
    /// Always invest one unit.
    BuyAndHold,
    /// One unit long after an observed rise, one unit short otherwise.
    Trending,
    Constant(Vec<f64>),
}

/// The two reference strategies of the portfolio experiment.
pub fn baselines() -> [(&'static str, Strategy); 2] {
    [("buy_and_hold", Strategy::BuyAndHold), ("trending", Strategy::Trending)]
}

/// Moments of the batch at one time.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean_x: DVector<f64>,
    pub cov_x: DMatrix<f64>,
    /// Mean of the stacked `(x, y)`.
    pub mean_xy: DVector<f64>,
}

impl Strategy {
    /// Control at time `k` given observations `y_0..=y_k` of one path.
    pub fn decide(&self, model: &ModelSpec, k: usize, ys: &[Vec<f64>], stats: &BatchStats) -> Result<Vec<f64>> {
        let y = ys.last().ok_or_else(|| Error::config("empty observation history"))?;
        match self {
            Strategy::Quantized { policy, grids } => {
                let map = policy.maps.get(k).ok_or(Error::Index {
                    index: k,
                    len: policy.maps.len(),
                })?;
                let c = map[grids.obs(k).project(y)];
                Ok(model.control(c).to_vec())
            }
            Strategy::LqFeedback(sol) => {
                let y = DVector::from_column_slice(y);
                let phi = feedback_posterior(sol, k, &stats.mean_x, &stats.cov_x, &y)?;
                Ok(optimal_feedback(sol, k, &phi, &stats.mean_xy)?.as_slice().to_vec())
            }
            Strategy::BuyAndHold => Ok(vec![1.0]),
            Strategy::Trending => {
                if k == 0 {
                    return Ok(vec![1.0]);
                }
                let rise = y[0] - ys[k - 1][0];
                Ok(vec![if rise >= 0.0 { 1.0 } else { -1.0 }])
            }
            Strategy::Constant(a) => Ok(a.clone()),
        }
    }
}

struct PathState {
    rng: StreamRng,
    x: Vec<f64>,
    ys: Vec<Vec<f64>>,
    cost: f64,
    failure: Option<Error>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub n_paths: usize,
    pub seed: u64,
    /// Hidden state at the horizon, per path.
    pub terminal: Vec<Vec<f64>>,
    /// Total realized cost per path, mean-field terms from the batch law.
    pub costs: Vec<f64>,
    pub mean_terminal: Vec<f64>,
    /// Unbiased per-coordinate variance of the terminal state.
    pub var_terminal: Vec<f64>,
    /// `(gamma/2) var - mean` for scalar mean-variance models.
    pub criterion: Option<f64>,
    /// Per-time batch summaries for times `0..=horizon`.
    pub marginals: Vec<MarginalSummary>,
}

/// Per-coordinate mean and population standard deviation of the batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    pub hidden_mean: Vec<f64>,
    pub hidden_sd: Vec<f64>,
    pub obs_mean: Vec<f64>,
    pub obs_sd: Vec<f64>,
}

fn summary(paths: &[PathState]) -> MarginalSummary {
    let n = paths.len() as f64;
    let moments = |get: &dyn Fn(&PathState) -> &[f64]| {
        let dim = get(&paths[0]).len();
        let mean: Vec<f64> = (0..dim)
            .map(|c| paths.iter().map(|p| get(p)[c]).sum::<f64>() / n)
            .collect();
        let sd = (0..dim)
            .map(|c| (paths.iter().map(|p| (get(p)[c] - mean[c]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        (mean, sd)
    };
    let (hidden_mean, hidden_sd) = moments(&|p| &p.x);
    let (obs_mean, obs_sd) = moments(&|p| p.ys.last().expect("history is never empty"));
    MarginalSummary {
        hidden_mean,
        hidden_sd,
        obs_mean,
        obs_sd,
    }
}

fn stats(paths: &[PathState], dim: usize) -> BatchStats {
    let n = paths.len() as f64;
    let dy = paths[0].ys.last().map_or(0, Vec::len);
    let mut mean_xy = DVector::zeros(dim + dy);
    for p in paths {
        for (k, v) in p.x.iter().chain(p.ys.last().into_iter().flatten()).enumerate() {
            mean_xy[k] += v;
        }
    }
    mean_xy /= n;
    let mean_x = mean_xy.rows(0, dim).into_owned();
    let mut cov_x = DMatrix::zeros(dim, dim);
    for p in paths {
        let dx = DVector::from_column_slice(&p.x) - &mean_x;
        cov_x.ger(1.0, &dx, &dx, 1.0);
    }
    cov_x /= n;
    BatchStats { mean_x, cov_x, mean_xy }
}

fn law_of(paths: &[PathState], dim: usize) -> Result<HiddenLaw> {
    HiddenLaw::empirical(dim, paths.iter().flat_map(|p| p.x.iter().copied()).collect())
}

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Simulates `n_paths` paths of the model under `strategy`.
pub fn simulate_batch(model: &ModelSpec, strategy: &Strategy, n_paths: usize, seed: u64) -> Result<BatchResult> {
    if n_paths < 2 {
        return Err(Error::config("a batch needs at least two paths"));
    }
    let dim = model.dims.hidden;
    let mut paths: Vec<PathState> = exec::try_map_range(n_paths, |i| {
        let mut r = rng::stream(seed, &[0x5a7, i as u64]);
        let (x, y) = model.sample_initial(&mut r)?;
        Ok(PathState {
            rng: r,
            x,
            ys: vec![y],
            cost: 0.0,
            failure: None,
        })
    })?;
    let mut marginals = Vec::with_capacity(model.horizon + 1);
    for k in 0..model.horizon {
        let st = stats(&paths, dim);
        marginals.push(summary(&paths));
        let law = law_of(&paths, dim)?;
        exec::for_each_mut(&mut paths, |_, p| {
            let mut run = || -> Result<()> {
                let a = strategy.decide(model, k, &p.ys, &st)?;
                p.cost += model.running_cost(k, &p.x, &law, &a);
                let y = p.ys.last().expect("history is never empty").clone();
                let (x1, y1) = model.step(k, &p.x, &y, &law, &a, &mut p.rng)?;
                p.x = x1;
                p.ys.push(y1);
                Ok(())
            };
            if let Err(e) = run() {
                p.failure = Some(e);
            }
        });
        if let Some(e) = paths.iter_mut().find_map(|p| p.failure.take()) {
            return Err(e);
        }
    }
    let law = law_of(&paths, dim)?;
    marginals.push(summary(&paths));
    exec::for_each_mut(&mut paths, |_, p| p.cost += model.terminal_cost(&p.x, &law));
    let (mut mean_terminal, mut var_terminal) = (Vec::new(), Vec::new());
    for c in 0..dim {
        let (m, v) = mean_var(paths.iter().map(|p| p.x[c]));
        mean_terminal.push(m);
        var_terminal.push(v);
    }
    let criterion = match (model.mean_variance, dim) {
        (Some(gamma), 1) => Some(0.5 * gamma * var_terminal[0] - mean_terminal[0]),
        _ => None,
    };
    Ok(BatchResult {
        n_paths,
        seed,
        terminal: paths.iter().map(|p| p.x.clone()).collect(),
        costs: paths.iter().map(|p| p.cost).collect(),
        mean_terminal,
        var_terminal,
        criterion,
        marginals,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyCost {
    pub estimate: f64,
    /// Standard error of the mean of per-path costs.
    pub std_error: f64,
    /// Bootstrap standard error of the mean-variance criterion, if any.
    pub bootstrap_se: Option<f64>,
}

/// Monte Carlo estimate of the expected total cost of `strategy`.
pub fn evaluate_policy_cost(
    model: &ModelSpec,
    strategy: &Strategy,
    n_paths: usize,
    seed: u64,
    bootstrap_resamples: usize,
) -> Result<PolicyCost> {
    let batch = simulate_batch(model, strategy, n_paths, seed)?;
    let (estimate, var) = mean_var(batch.costs.iter().copied());
    let bootstrap_se = match model.mean_variance {
        Some(gamma) if model.dims.hidden == 1 && bootstrap_resamples > 1 => {
            let xs: Vec<f64> = batch.terminal.iter().map(|x| x[0]).collect();
            Some(bootstrap_criterion(&xs, gamma, bootstrap_resamples, seed).se)
        }
        _ => None,
    };
    Ok(PolicyCost {
        estimate,
        std_error: (var / n_paths as f64).sqrt(),
        bootstrap_se,
    })
}

/// `(gamma/2) var - mean` with the unbiased variance.
pub fn mean_variance_criterion(xs: &[f64], gamma: f64) -> f64 {
    let (m, v) = mean_var(xs.iter().copied());
    0.5 * gamma * v - m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub estimate: f64,
    pub se: f64,
    /// 2.5% and 97.5% percentiles of the replicates.
    pub interval: (f64, f64),
}

fn summarize(estimate: f64, mut reps: Vec<f64>) -> BootstrapSummary {
    let (_, var) = mean_var(reps.iter().copied());
    reps.sort_by(f64::total_cmp);
    let q = |p: f64| reps[((p * (reps.len() - 1) as f64).round() as usize).min(reps.len() - 1)];
    BootstrapSummary {
        estimate,
        se: var.sqrt(),
        interval: (q(0.025), q(0.975)),
    }
}

fn resample(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut g = rng::stream(seed, &[0xb007, r as u64]);
    (0..n).map(|_| g.random_range(0..n)).collect()
}

/// Nonparametric bootstrap of the mean-variance criterion.
pub fn bootstrap_criterion(xs: &[f64], gamma: f64, resamples: usize, seed: u64) -> BootstrapSummary {
    let reps = exec::map_range(resamples, |r| {
        let sample: Vec<f64> = resample(xs.len(), seed, r).into_iter().map(|i| xs[i]).collect();
        mean_variance_criterion(&sample, gamma)
    });
    summarize(mean_variance_criterion(xs, gamma), reps)
}

/// Paired bootstrap of the criterion difference `a - b` for two batches
/// driven by the same noise.
pub fn bootstrap_difference(a: &[f64], b: &[f64], gamma: f64, resamples: usize, seed: u64) -> Result<BootstrapSummary> {
    if a.len() != b.len() {
        return Err(Error::config("paired bootstrap needs batches of equal size"));
    }
    let reps = exec::map_range(resamples, |r| {
        let idx = resample(a.len(), seed, r);
        let sa: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
        let sb: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
        mean_variance_criterion(&sa, gamma) - mean_variance_criterion(&sb, gamma)
    });
    Ok(summarize(
        mean_variance_criterion(a, gamma) - mean_variance_criterion(b, gamma),
        reps,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{portfolio_model, PortfolioParams};

    #[test]
    fn trending_follows_observed_moves() {
        let model = portfolio_model(&PortfolioParams::default()).unwrap();
        let st = BatchStats {
            mean_x: DVector::zeros(1),
            cov_x: DMatrix::zeros(1, 1),
            mean_xy: DVector::zeros(2),
        };
        let ys = [vec![1.0], vec![0.9], vec![1.1]];
        let a: Vec<f64> = (0..3)
            .map(|k| Strategy::Trending.decide(&model, k, &ys[..=k], &st).unwrap()[0])
            .collect();
        assert_eq!(a, vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn table_identity() {
        let v: f64 = 0.5 * 2.0 * 0.00481573 - 1.02027868;
        assert!((v + 1.01546295).abs() < 1e-12);
    }
}
