use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dims, HiddenLaw, ModelSpec};
use crate::error::{Error, Result};
use crate::quantize::WeightedSample;

/// Wealth `x' = x + a (b0 dt + sigma sqrt(dt) eps)` observed as `y' = x' + s eta`
/// with the terminal criterion `(gamma/2)(x - E x)^2 - x` and no running cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortfolioParams {
    pub drift: f64,
    pub volatility: f64,
    pub dt: f64,
    pub risk_aversion: f64,
    pub horizon: usize,
    pub controls: Vec<f64>,
    pub initial_wealth: f64,
    pub initial_obs: f64,
    pub obs_noise_std: f64,
}

impl Default for PortfolioParams {
    fn default() -> Self {
        PortfolioParams {
            drift: 0.02,
            volatility: 0.05,
            dt: 0.5,
            risk_aversion: 2.0,
            horizon: 5,
            controls: vec![0.5, 0.75, 1.0, 2.0],
            initial_wealth: 1.0,
            initial_obs: 1.0,
            obs_noise_std: 1.0,
        }
    }
}

impl PortfolioParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.volatility, self.dt, self.obs_noise_std];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.risk_aversion >= 0.0) {
            return Err(Error::config(
                "portfolio volatility, dt, noise and risk aversion must be positive",
            ));
        }
        if self.controls.is_empty() || self.horizon == 0 {
            return Err(Error::config("portfolio needs controls and a positive horizon"));
        }
        Ok(())
    }
}

/// The mean-variance portfolio model as a [`ModelSpec`].
pub fn portfolio_model(params: &PortfolioParams) -> Result<ModelSpec> {
    params.validate()?;
    let p = params.clone();
    let dims = Dims {
        hidden: 1,
        obs: 1,
        control: 1,
    };
    let gamma = p.risk_aversion;
    let (mu, sig) = (p.drift * p.dt, p.volatility * p.dt.sqrt());
    let s = p.obs_noise_std;
    let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
    let (x0, y0) = (p.initial_wealth, p.initial_obs);
    ModelSpec::builder(dims, p.horizon, p.controls.iter().map(|&a| vec![a]).collect())
        .hidden_step(Arc::new(move |_, x: &[f64], _: &HiddenLaw, a: &[f64], eps: &[f64]| {
            vec![x[0] + a[0] * (mu + sig * eps[0])]
        }))
        .obs_step(Arc::new(move |_, x1: &[f64], _: &[f64], _: &[f64], eta: &[f64]| {
            vec![x1[0] + s * eta[0]]
        }))
        .obs_density(Arc::new(move |_, x1: &[f64], _: &[f64], _: &[f64], y1: &[f64]| {
            let z = (y1[0] - x1[0]) / s;
            norm * (-0.5 * z * z).exp()
        }))
        .terminal_cost(Arc::new(move |x: &[f64], law: &HiddenLaw| {
            let dev = x[0] - law.mean()[0];
            0.5 * gamma * dev * dev - x[0]
        }))
        .noises(
            Arc::new(|rng: &mut dyn rand::RngCore| vec![rng.sample(StandardNormal)]),
            Arc::new(|rng: &mut dyn rand::RngCore| vec![rng.sample(StandardNormal)]),
        )
        .initial_sampler(Arc::new(move |_: &mut dyn rand::RngCore| (vec![x0], vec![y0])))
        .initial_rule(WeightedSample::dirac(&[x0]), WeightedSample::dirac(&[y0]))
        .mean_field_key(Arc::new(|_| Vec::new()))
        .mean_variance(gamma)
        .build()
}
