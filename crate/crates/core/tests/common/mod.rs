//! Small random quantized instances and brute-force path enumeration used as
//! independent references.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use mfpo::dp::{ClosedLoopPolicy, QuantizedProblem};
use mfpo::measures::JointMeasure;
use mfpo::model::{Dims, HiddenLaw, ModelSpec};
use mfpo::quantize::{FnKernels, Grid, Grids};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Kernel tables: `hidden[n][c][i]` for a centered and a shifted mean field,
/// `obs[n][c][k][j]` over next observation cells.
#[derive(Clone, Debug)]
pub struct Tables {
    pub hidden_low: Vec<Vec<Vec<Vec<f64>>>>,
    pub hidden_high: Vec<Vec<Vec<Vec<f64>>>>,
    pub obs: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl Tables {
    /// Mixing weight in (0, 1) driven by the hidden mean.
    pub fn tilt(law: &HiddenLaw) -> f64 {
        1.0 / (1.0 + (-2.0 * law.mean()[0]).exp())
    }

    pub fn hidden(&self, n: usize, i: usize, c: usize, law: &HiddenLaw) -> Vec<f64> {
        let w = Self::tilt(law);
        self.hidden_low[n][c][i]
            .iter()
            .zip(&self.hidden_high[n][c][i])
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect()
    }
}

pub struct Toy {
    pub model: ModelSpec,
    pub grids: Grids,
    pub kernels: FnKernels,
    pub tables: Tables,
    pub initial: JointMeasure,
}

impl Toy {
    pub fn problem(&self) -> QuantizedProblem<'_> {
        QuantizedProblem::new(&self.model, &self.grids, &self.kernels, self.initial.clone()).unwrap()
    }
}

fn stochastic(rng: &mut ChaCha8Rng, len: usize, sparse: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len)
        .map(|_| {
            if sparse && rng.random::<f64>() < 0.3 {
                0.0
            } else {
                rng.random::<f64>() + 0.05
            }
        })
        .collect();
    if v.iter().all(|x| *x == 0.0) {
        v[0] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Random instance with mean-field dependent hidden kernels and quadratic
/// costs. `sparse` puts exact zeros in kernels and the initial law.
pub fn toy(seed: u64, n_hidden: usize, n_obs: usize, n_controls: usize, horizon: usize, sparse: bool) -> Toy {
    toy_with_costs(seed, n_hidden, n_obs, n_controls, horizon, sparse, 1.0, 0.0)
}

/// As [`toy`] with all costs multiplied by `scale` and `shift` added to the
/// terminal cost.
#[allow(clippy::too_many_arguments)]
pub fn toy_with_costs(
    seed: u64,
    n_hidden: usize,
    n_obs: usize,
    n_controls: usize,
    horizon: usize,
    sparse: bool,
    scale: f64,
    shift: f64,
) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = |rng: &mut ChaCha8Rng, rows: usize, len: usize| -> Vec<Vec<Vec<Vec<f64>>>> {
        (0..horizon)
            .map(|_| {
                (0..n_controls)
                    .map(|_| (0..rows).map(|_| stochastic(rng, len, sparse)).collect())
                    .collect()
            })
            .collect()
    };
    let hidden_low = table(&mut rng, n_hidden, n_hidden);
    let hidden_high = table(&mut rng, n_hidden, n_hidden);
    let obs: Vec<Vec<Vec<Vec<Vec<f64>>>>> = (0..horizon)
        .map(|_| {
            (0..n_controls)
                .map(|_| {
                    (0..n_hidden)
                        .map(|_| (0..n_obs).map(|_| stochastic(&mut rng, n_obs, sparse)).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    let tables = Tables {
        hidden_low,
        hidden_high,
        obs,
    };
    let hidden_centers: Vec<f64> = (0..n_hidden).map(|i| i as f64 - 0.5 * (n_hidden - 1) as f64).collect();
    let obs_centers: Vec<f64> = (0..n_obs).map(|j| 0.7 * j as f64 - 0.3).collect();
    let grids = Grids::fixed(
        Grid::scalar(&hidden_centers).unwrap(),
        Grid::scalar(&obs_centers).unwrap(),
    );
    let controls: Vec<Vec<f64>> = (0..n_controls).map(|c| vec![c as f64 - 0.5]).collect();
    let q: f64 = rng.random_range(0.5..1.5);
    let qbar: f64 = rng.random_range(0.0..1.0);
    let r: f64 = rng.random_range(0.1..1.0);
    let model = ModelSpec::builder(
        Dims {
            hidden: 1,
            obs: 1,
            control: 1,
        },
        horizon,
        controls,
    )
    .running_cost(Arc::new(move |n, x, law, a| {
        scale
            * (q * (x[0] - 0.3 * n as f64).powi(2) + qbar * law.mean()[0].powi(2) + r * a[0] * a[0] + 0.4 * x[0] * a[0])
    }))
    .terminal_cost(Arc::new(move |x, law| {
        scale * ((x[0] - law.mean()[0]).powi(2) - 0.5 * x[0]) + shift
    }))
    .build()
    .unwrap();
    let t1 = tables.clone();
    let t2 = tables.clone();
    let kernels = FnKernels::new(
        move |n, i, c, law| t1.hidden(n, i, c, law),
        move |n, k, j, c| t2.obs[n][c][k][j].clone(),
    );
    let initial = JointMeasure::new(n_hidden, n_obs, stochastic(&mut rng, n_hidden * n_obs, sparse)).unwrap();
    Toy {
        model,
        grids,
        kernels,
        tables,
        initial,
    }
}

/// Full path law `(x_0, y_0, ..., x_n, y_n) -> weight` under a closed-loop
/// policy, built by brute-force enumeration one time step at a time. The
/// mean field at each step is the hidden marginal of the paths so far.
pub fn enumerate_paths(toy: &Toy, policy: &ClosedLoopPolicy, upto: usize) -> Vec<BTreeMap<Vec<(usize, usize)>, f64>> {
    let (nh, no) = (toy.grids.n_hidden(), toy.grids.n_obs());
    let mut level: BTreeMap<Vec<(usize, usize)>, f64> = BTreeMap::new();
    for i in 0..nh {
        for j in 0..no {
            level.insert(vec![(i, j)], toy.initial.get(i, j));
        }
    }
    let mut out = vec![level.clone()];
    for n in 0..upto {
        let mut mu = vec![0.0; nh];
        for (p, w) in &level {
            mu[p[n].0] += w;
        }
        let law = HiddenLaw::new(1, toy.grids.hidden(n).centers().map(|c| c[0]).collect(), mu).unwrap();
        let mut next = BTreeMap::new();
        for (p, w) in &level {
            let (i, j) = p[n];
            let c = policy.maps[n][j];
            let row = toy.tables.hidden(n, i, c, &law);
            for (k, pk) in row.iter().enumerate() {
                for (l, hl) in toy.tables.obs[n][c][k][j].iter().enumerate() {
                    let mut q = p.clone();
                    q.push((k, l));
                    *next.entry(q).or_insert(0.0) += w * pk * hl;
                }
            }
        }
        level = next;
        out.push(level.clone());
    }
    out
}

/// Expected total cost of a closed-loop policy by brute-force enumeration.
pub fn brute_force_cost(toy: &Toy, policy: &ClosedLoopPolicy) -> f64 {
    let t = toy.model.horizon;
    let levels = enumerate_paths(toy, policy, t);
    let nh = toy.grids.n_hidden();
    let centers: Vec<f64> = toy.grids.hidden(0).centers().map(|c| c[0]).collect();
    let law_at = |n: usize| {
        let mut mu = vec![0.0; nh];
        for (p, w) in &levels[n] {
            mu[p[n].0] += w;
        }
        HiddenLaw::new(1, centers.clone(), mu).unwrap()
    };
    let mut total = 0.0;
    for n in 0..t {
        let law = law_at(n);
        for (p, w) in &levels[n] {
            let (i, j) = p[n];
            let a = toy.model.control(policy.maps[n][j]);
            total += w * toy.model.running_cost(n, &[centers[i]], &law, a);
        }
    }
    let law = law_at(t);
    for (p, w) in &levels[t] {
        total += w * toy.model.terminal_cost(&[centers[p[t].0]], &law);
    }
    total
}

/// Every closed-loop policy of the instance.
pub fn all_policies(horizon: usize, n_obs: usize, n_controls: usize) -> Vec<ClosedLoopPolicy> {
    let maps: Vec<Vec<usize>> = (0..n_controls.pow(n_obs as u32))
        .map(|mut k| {
            (0..n_obs)
                .map(|_| {
                    let c = k % n_controls;
                    k /= n_controls;
                    c
                })
                .collect()
        })
        .collect();
    let mut out = vec![vec![]];
    for _ in 0..horizon {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<Vec<usize>>| {
                maps.iter().map(move |m| {
                    let mut p = prefix.clone();
                    p.push(m.clone());
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(|maps| ClosedLoopPolicy { maps }).collect()
}
