//! Controlled partially observed mean-field models.
//!
//! A [`ModelSpec`] bundles the hidden transition, the observation transition
//! and its density, the costs and the noise samplers as shared closures. The
//! mean-field argument is always passed as a [`HiddenLaw`].

mod lq;
mod portfolio;

pub use lq::{lq_model, LqParams};
pub use portfolio::{portfolio_model, PortfolioParams};

use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, JointMeasure};
use crate::quantize::{Grids, WeightedSample};
use crate::rng;

/// Finitely supported law of the hidden state, with coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenLaw {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    mean: Vec<f64>,
}

impl HiddenLaw {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() != dim * weights.len() {
            return Err(Error::config("hidden law points and weights do not match"));
        }
        let mut mean = vec![0.0; dim];
        for (p, w) in points.chunks(dim).zip(&weights) {
            mean.iter_mut().zip(p).for_each(|(m, x)| *m += w * x);
        }
        Ok(HiddenLaw {
            dim,
            points,
            weights,
            mean,
        })
    }

    /// Law of grid centers under a measure on grid indices.
    pub fn on_grid(grid: &crate::quantize::Grid, m: &DiscreteMeasure) -> Result<Self> {
        if grid.len() != m.len() {
            return Err(Error::config("measure and grid sizes differ"));
        }
        let points = grid.centers().flat_map(|c| c.iter().copied()).collect();
        Self::new(grid.dim(), points, m.weights().to_vec())
    }

    /// Empirical measure of equally weighted particles.
    pub fn empirical(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len() / dim.max(1);
        Self::new(dim, points, vec![1.0 / n as f64; n])
    }

    pub fn dirac(x: &[f64]) -> Self {
        HiddenLaw {
            dim: x.len(),
            points: x.to_vec(),
            weights: vec![1.0],
            mean: x.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.dim)
    }

    /// Per-coordinate variance about the mean (population normalization).
    pub fn variance(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (p, w) in self.points.chunks(self.dim).zip(&self.weights) {
            for k in 0..self.dim {
                v[k] += w * (p[k] - self.mean[k]).powi(2);
            }
        }
        v
    }

    /// Bit pattern of every coordinate and weight; used to key kernel caches
    /// for models whose transition depends on the full law.
    pub fn fingerprint(&self) -> Vec<u64> {
        self.points.iter().chain(&self.weights).map(|v| v.to_bits()).collect()
    }
}

/// Dimensions of hidden state, observation, control and the two noises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub hidden: usize,
    pub obs: usize,
    pub control: usize,
}

pub type HiddenStep = Arc<dyn Fn(usize, &[f64], &HiddenLaw, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type ObsStep = Arc<dyn Fn(usize, &[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type ObsDensity = Arc<dyn Fn(usize, &[f64], &[f64], &[f64], &[f64]) -> f64 + Send + Sync>;
pub type RunningCost = Arc<dyn Fn(usize, &[f64], &HiddenLaw, &[f64]) -> f64 + Send + Sync>;
pub type TerminalCost = Arc<dyn Fn(&[f64], &HiddenLaw) -> f64 + Send + Sync>;
pub type NoiseSampler = Arc<dyn Fn(&mut dyn RngCore) -> Vec<f64> + Send + Sync>;
pub type InitialSampler = Arc<dyn Fn(&mut dyn RngCore) -> (Vec<f64>, Vec<f64>) + Send + Sync>;
pub type MeanFieldKey = Arc<dyn Fn(&HiddenLaw) -> Vec<u64> + Send + Sync>;

/// A controlled model on a horizon `0..=horizon`.
///
/// The time argument `n` of the step maps and of the observation density
/// refers to the transition from `n` to `n + 1`.
#[derive(Clone)]
pub struct ModelSpec {
    pub dims: Dims,
    pub horizon: usize,
    pub controls: Vec<Vec<f64>>,
    hidden_step: Option<HiddenStep>,
    obs_step: Option<ObsStep>,
    obs_density: Option<ObsDensity>,
    running_cost: RunningCost,
    terminal_cost: TerminalCost,
    hidden_noise: Option<NoiseSampler>,
    obs_noise: Option<NoiseSampler>,
    initial_sampler: Option<InitialSampler>,
    initial_rule: Option<(WeightedSample, WeightedSample)>,
    mean_field_key: MeanFieldKey,
    /// Risk aversion of a terminal mean-variance criterion, if any.
    pub mean_variance: Option<f64>,
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("dims", &self.dims)
            .field("horizon", &self.horizon)
            .field("controls", &self.controls)
            .finish_non_exhaustive()
    }
}

pub struct ModelBuilder {
    spec: ModelSpec,
}

impl ModelSpec {
    pub fn builder(dims: Dims, horizon: usize, controls: Vec<Vec<f64>>) -> ModelBuilder {
        ModelBuilder {
            spec: ModelSpec {
                dims,
                horizon,
                controls,
                hidden_step: None,
                obs_step: None,
                obs_density: None,
                running_cost: Arc::new(|_, _, _, _| 0.0),
                terminal_cost: Arc::new(|_, _| 0.0),
                hidden_noise: None,
                obs_noise: None,
                initial_sampler: None,
                initial_rule: None,
                mean_field_key: Arc::new(HiddenLaw::fingerprint),
                mean_variance: None,
            },
        }
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn control(&self, c: usize) -> &[f64] {
        &self.controls[c]
    }

    pub fn running_cost(&self, n: usize, x: &[f64], law: &HiddenLaw, a: &[f64]) -> f64 {
        (self.running_cost)(n, x, law, a)
    }

    pub fn terminal_cost(&self, x: &[f64], law: &HiddenLaw) -> f64 {
        (self.terminal_cost)(x, law)
    }

    pub fn mean_field_key(&self, law: &HiddenLaw) -> Vec<u64> {
        (self.mean_field_key)(law)
    }

    pub fn obs_density(&self, n: usize, x_next: &[f64], y: &[f64], a: &[f64], y_next: &[f64]) -> Result<f64> {
        let h = self
            .obs_density
            .as_ref()
            .ok_or_else(|| Error::config("model has no observation density"))?;
        Ok(h(n, x_next, y, a, y_next))
    }

    fn samplers(&self) -> Result<(&HiddenStep, &ObsStep, &NoiseSampler, &NoiseSampler)> {
        match (&self.hidden_step, &self.obs_step, &self.hidden_noise, &self.obs_noise) {
            (Some(g), Some(h), Some(e), Some(o)) => Ok((g, h, e, o)),
            _ => Err(Error::config("model lacks step maps or noise samplers")),
        }
    }

    /// Draws the hidden successor of `x` under control `a`.
    pub fn sample_hidden(
        &self,
        n: usize,
        x: &[f64],
        law: &HiddenLaw,
        a: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>> {
        let (g, _, eps, _) = self.samplers()?;
        Ok(g(n, x, law, a, &eps(rng)))
    }

    /// Draws the next observation given the new hidden state.
    pub fn sample_obs(
        &self,
        n: usize,
        x_next: &[f64],
        y: &[f64],
        a: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>> {
        let (_, h, _, eta) = self.samplers()?;
        Ok(h(n, x_next, y, a, &eta(rng)))
    }

    /// One transition `(x, y) -> (x', y')`.
    pub fn step(
        &self,
        n: usize,
        x: &[f64],
        y: &[f64],
        law: &HiddenLaw,
        a: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let x_next = self.sample_hidden(n, x, law, a, rng)?;
        let y_next = self.sample_obs(n, &x_next, y, a, rng)?;
        Ok((x_next, y_next))
    }

    pub fn sample_initial(&self, rng: &mut dyn RngCore) -> Result<(Vec<f64>, Vec<f64>)> {
        if let Some(s) = &self.initial_sampler {
            return Ok(s(rng));
        }
        Err(Error::config("model has no initial sampler"))
    }

    /// Quantized initial joint law. Uses the exact product rule when the
    /// model provides one and `n_mc` seeded draws otherwise.
    pub fn quantized_initial(&self, grids: &Grids, n_mc: usize, seed: u64) -> Result<JointMeasure> {
        let (gx, gy) = (grids.hidden(0), grids.obs(0));
        if let Some((rx, ry)) = &self.initial_rule {
            let project = |rule: &WeightedSample, grid: &crate::quantize::Grid| {
                let mut w = vec![0.0; grid.len()];
                for k in 0..rule.len() {
                    w[grid.project(rule.point(k))] += rule.weights[k];
                }
                DiscreteMeasure::probability(w)
            };
            return JointMeasure::product(&project(rx, gx)?, &project(ry, gy)?);
        }
        let mut r = rng::stream(seed, &[0x1d17]);
        let mut w = vec![0.0; gx.len() * gy.len()];
        for _ in 0..n_mc {
            let (x, y) = self.sample_initial(&mut r)?;
            w[gx.project(&x) * gy.len() + gy.project(&y)] += 1.0 / n_mc as f64;
        }
        JointMeasure::new(gx.len(), gy.len(), w)
    }
}

impl ModelBuilder {
    pub fn hidden_step(mut self, f: HiddenStep) -> Self {
        self.spec.hidden_step = Some(f);
        self
    }

    pub fn obs_step(mut self, f: ObsStep) -> Self {
        self.spec.obs_step = Some(f);
        self
    }

    pub fn obs_density(mut self, f: ObsDensity) -> Self {
        self.spec.obs_density = Some(f);
        self
    }

    pub fn running_cost(mut self, f: RunningCost) -> Self {
        self.spec.running_cost = f;
        self
    }

    pub fn terminal_cost(mut self, f: TerminalCost) -> Self {
        self.spec.terminal_cost = f;
        self
    }

    pub fn noises(mut self, hidden: NoiseSampler, obs: NoiseSampler) -> Self {
        self.spec.hidden_noise = Some(hidden);
        self.spec.obs_noise = Some(obs);
        self
    }

    pub fn initial_sampler(mut self, f: InitialSampler) -> Self {
        self.spec.initial_sampler = Some(f);
        self
    }

    /// Initial law as a product of two weighted point sets.
    pub fn initial_rule(mut self, hidden: WeightedSample, obs: WeightedSample) -> Self {
        self.spec.initial_rule = Some((hidden, obs));
        self
    }

    /// Key under which kernel estimates may be shared between laws. The
    /// default distinguishes every law; models whose transition ignores the
    /// law should return an empty key.
    pub fn mean_field_key(mut self, f: MeanFieldKey) -> Self {
        self.spec.mean_field_key = f;
        self
    }

    pub fn mean_variance(mut self, gamma: f64) -> Self {
        self.spec.mean_variance = Some(gamma);
        self
    }

    pub fn build(self) -> Result<ModelSpec> {
        let s = self.spec;
        if s.controls.is_empty() {
            return Err(Error::config("control set is empty"));
        }
        if s.controls.iter().any(|c| c.len() != s.dims.control) {
            return Err(Error::config("control of wrong dimension"));
        }
        if s.dims.hidden == 0 || s.dims.obs == 0 {
            return Err(Error::config("state dimensions must be positive"));
        }
        Ok(s)
    }
}
