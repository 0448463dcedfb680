use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::Grids;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{HiddenLaw, ModelSpec};
use crate::rng;

pub type Row = Arc<Vec<f64>>;

/// Transition probabilities between grid cells.
///
/// `hidden_row(n, i, c, law)` is the law over hidden cells at time `n + 1`
/// started from hidden center `i` at time `n` under control `c`, with the
/// mean-field argument `law`. `obs_row(n, k, j, c)` is the law over
/// observation cells at time `n + 1` given hidden center `k` at time `n + 1`
/// and observation center `j` at time `n`.
pub trait KernelSource: Send + Sync {
    fn hidden_row(&self, n: usize, i: usize, control: usize, law: &HiddenLaw) -> Result<Row>;
    fn obs_row(&self, n: usize, k: usize, j: usize, control: usize) -> Result<Row>;
}

type HiddenFn = dyn Fn(usize, usize, usize, &HiddenLaw) -> Vec<f64> + Send + Sync;
type ObsFn = dyn Fn(usize, usize, usize, usize) -> Vec<f64> + Send + Sync;

/// Kernels given in closed form or tabulated by the caller.
pub struct FnKernels {
    hidden: Box<HiddenFn>,
    obs: Box<ObsFn>,
}

impl FnKernels {
    pub fn new(
        hidden: impl Fn(usize, usize, usize, &HiddenLaw) -> Vec<f64> + Send + Sync + 'static,
        obs: impl Fn(usize, usize, usize, usize) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        FnKernels {
            hidden: Box::new(hidden),
            obs: Box::new(obs),
        }
    }
}

impl KernelSource for FnKernels {
    fn hidden_row(&self, n: usize, i: usize, control: usize, law: &HiddenLaw) -> Result<Row> {
        Ok(Arc::new((self.hidden)(n, i, control, law)))
    }

    fn obs_row(&self, n: usize, k: usize, j: usize, control: usize) -> Result<Row> {
        Ok(Arc::new((self.obs)(n, k, j, control)))
    }
}

const HIDDEN_TAG: u64 = 0x4b1;
const OBS_TAG: u64 = 0x4b2;

fn hidden_draws(
    model: &ModelSpec,
    grids: &Grids,
    n: usize,
    i: usize,
    control: usize,
    law: &HiddenLaw,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let src = grids.hidden(n).center(i);
    let dst = grids.hidden(n + 1);
    let a = model.control(control);
    let mut r = rng::stream(seed, &[HIDDEN_TAG, n as u64, i as u64, control as u64]);
    let mut counts = vec![0u64; dst.len()];
    for _ in 0..n_mc {
        counts[dst.project(&model.sample_hidden(n, src, law, a, &mut r)?)] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / n_mc as f64).collect())
}

fn obs_draws(
    model: &ModelSpec,
    grids: &Grids,
    n: usize,
    k: usize,
    j: usize,
    control: usize,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let x1 = grids.hidden(n + 1).center(k);
    let y = grids.obs(n).center(j);
    let dst = grids.obs(n + 1);
    let a = model.control(control);
    let mut r = rng::stream(seed, &[OBS_TAG, n as u64, k as u64, j as u64, control as u64]);
    let mut counts = vec![0u64; dst.len()];
    for _ in 0..n_mc {
        counts[dst.project(&model.sample_obs(n, x1, y, a, &mut r)?)] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / n_mc as f64).collect())
}

/// Monte Carlo estimate of one hidden row and the full observation table for
/// source cell `(i, j)`: returns `P(i -> .)` and `h(k, j, .)` for every `k`.
/// Each row is drawn from its own stream keyed by time, cells and control.
pub fn estimate_kernels(
    model: &ModelSpec,
    grids: &Grids,
    n: usize,
    control: usize,
    source: (usize, usize),
    law: &HiddenLaw,
    n_mc: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_args(model, grids, n, n_mc)?;
    let p = hidden_draws(model, grids, n, source.0, control, law, n_mc, seed)?;
    let h = (0..grids.n_hidden())
        .map(|k| obs_draws(model, grids, n, k, source.1, control, n_mc, seed))
        .collect::<Result<_>>()?;
    Ok((p, h))
}

fn check_args(model: &ModelSpec, grids: &Grids, n: usize, n_mc: usize) -> Result<()> {
    if n >= model.horizon {
        return Err(Error::Index {
            index: n,
            len: model.horizon,
        });
    }
    if n_mc == 0 {
        return Err(Error::config("kernel estimation needs at least one draw"));
    }
    grids.check_horizon(model.horizon)
}

type HiddenKey = (usize, usize, usize, Vec<u64>);

/// Monte Carlo kernels with caching.
///
/// Observation rows are tabulated up front. Hidden rows are tabulated up
/// front when the model ignores the mean-field argument and cached per law
/// key otherwise.
pub struct MonteCarloKernels {
    model: ModelSpec,
    grids: Grids,
    n_mc: usize,
    seed: u64,
    obs: Vec<Row>,
    hidden_fixed: Option<Vec<Row>>,
    hidden_cache: RwLock<HashMap<HiddenKey, Row>>,
}

impl MonteCarloKernels {
    pub fn new(model: &ModelSpec, grids: &Grids, n_mc: usize, seed: u64) -> Result<Self> {
        let t = model.horizon;
        if t > 0 {
            check_args(model, grids, 0, n_mc)?;
        }
        let (nh, no, nc) = (grids.n_hidden(), grids.n_obs(), model.n_controls());
        let obs = exec::try_map_range(t * nh * no * nc, |idx| {
            let c = idx % nc;
            let j = (idx / nc) % no;
            let k = (idx / (nc * no)) % nh;
            let n = idx / (nc * no * nh);
            obs_draws(model, grids, n, k, j, c, n_mc, seed).map(Arc::new)
        })?;
        let probe = HiddenLaw::dirac(&vec![0.0; model.dims.hidden]);
        let hidden_fixed = if model.mean_field_key(&probe).is_empty() {
            Some(exec::try_map_range(t * nh * nc, |idx| {
                let c = idx % nc;
                let i = (idx / nc) % nh;
                let n = idx / (nc * nh);
                hidden_draws(model, grids, n, i, c, &probe, n_mc, seed).map(Arc::new)
            })?)
        } else {
            None
        };
        Ok(MonteCarloKernels {
            model: model.clone(),
            grids: grids.clone(),
            n_mc,
            seed,
            obs,
            hidden_fixed,
            hidden_cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn n_mc(&self) -> usize {
        self.n_mc
    }

    fn check(&self, n: usize, control: usize) -> Result<()> {
        if n >= self.model.horizon {
            return Err(Error::Index {
                index: n,
                len: self.model.horizon,
            });
        }
        if control >= self.model.n_controls() {
            return Err(Error::Index {
                index: control,
                len: self.model.n_controls(),
            });
        }
        Ok(())
    }
}

impl KernelSource for MonteCarloKernels {
    fn hidden_row(&self, n: usize, i: usize, control: usize, law: &HiddenLaw) -> Result<Row> {
        self.check(n, control)?;
        let (nh, nc) = (self.grids.n_hidden(), self.model.n_controls());
        if let Some(table) = &self.hidden_fixed {
            return Ok(table[(n * nh + i) * nc + control].clone());
        }
        let key = (n, i, control, self.model.mean_field_key(law));
        if let Some(row) = self.hidden_cache.read().expect("kernel cache poisoned").get(&key) {
            return Ok(row.clone());
        }
        let row = Arc::new(hidden_draws(
            &self.model,
            &self.grids,
            n,
            i,
            control,
            law,
            self.n_mc,
            self.seed,
        )?);
        let mut cache = self.hidden_cache.write().expect("kernel cache poisoned");
        Ok(cache.entry(key).or_insert(row).clone())
    }

    fn obs_row(&self, n: usize, k: usize, j: usize, control: usize) -> Result<Row> {
        self.check(n, control)?;
        let (nh, no, nc) = (self.grids.n_hidden(), self.grids.n_obs(), self.model.n_controls());
        Ok(self.obs[((n * nh + k) * no + j) * nc + control].clone())
    }
}
