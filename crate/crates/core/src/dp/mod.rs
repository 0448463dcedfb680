//! Dynamic programming on joint laws of hidden state and observation.
//!
//! A state at time `n` is the joint law of `(X_n, Y_n)` on grid cells, and a
//! decision is a closed-loop control map assigning a control index to every
//! observation cell.

mod exact;
mod optimize;
mod quantized;

pub use exact::{exact_path_dp, push_path_measure, ExactOptions, ExactSolution, HistoryMap};
pub(crate) use optimize::check_enumeration;
pub use optimize::{optimize_control_map, MapChoice, OptimizerMode, AUTO_ENUMERATE_LIMIT, HARD_ENUMERATE_LIMIT};
pub use quantized::{quantized_dp, DpSolution, StateKey, ValueEntry, ValueTable};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, JointMeasure};
use crate::model::{HiddenLaw, ModelSpec};
use crate::quantize::{Grids, KernelSource};

/// Control index for each observation cell.
pub type ControlMap = Vec<usize>;

/// One control map per decision time `0..horizon`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosedLoopPolicy {
    pub maps: Vec<ControlMap>,
}

impl ClosedLoopPolicy {
    pub fn constant(horizon: usize, n_obs: usize, control: usize) -> Self {
        ClosedLoopPolicy {
            maps: vec![vec![control; n_obs]; horizon],
        }
    }
}

/// Everything the quantized recursion needs: the model (for costs and
/// controls), the grids, the transition kernels and the initial joint law.
pub struct QuantizedProblem<'a> {
    pub model: &'a ModelSpec,
    pub grids: &'a Grids,
    pub kernels: &'a dyn KernelSource,
    pub initial: JointMeasure,
}

impl<'a> QuantizedProblem<'a> {
    pub fn new(
        model: &'a ModelSpec,
        grids: &'a Grids,
        kernels: &'a dyn KernelSource,
        initial: JointMeasure,
    ) -> Result<Self> {
        grids.check_horizon(model.horizon)?;
        if initial.rows() != grids.n_hidden() || initial.cols() != grids.n_obs() {
            return Err(Error::config("initial law does not match the grids"));
        }
        Ok(QuantizedProblem {
            model,
            grids,
            kernels,
            initial,
        })
    }

    pub fn horizon(&self) -> usize {
        self.model.horizon
    }

    pub fn n_hidden(&self) -> usize {
        self.grids.n_hidden()
    }

    pub fn n_obs(&self) -> usize {
        self.grids.n_obs()
    }

    pub fn n_controls(&self) -> usize {
        self.model.n_controls()
    }

    /// Hidden law of `m` read through the hidden grid at time `n`.
    pub fn hidden_law(&self, m: &JointMeasure, n: usize) -> Result<HiddenLaw> {
        HiddenLaw::on_grid(self.grids.hidden(n), &m.first_marginal())
    }

    fn check_map(&self, map: &[usize]) -> Result<()> {
        if map.len() != self.n_obs() {
            return Err(Error::config(format!(
                "control map has {} entries for {} observation cells",
                map.len(),
                self.n_obs()
            )));
        }
        match map.iter().find(|&&c| c >= self.n_controls()) {
            Some(&c) => Err(Error::Index {
                index: c,
                len: self.n_controls(),
            }),
            None => Ok(()),
        }
    }

    /// Contribution of observation column `y` under control `c` to the pushed
    /// joint law, as a dense `n_hidden x n_obs` block.
    fn column_push(&self, m: &JointMeasure, law: &HiddenLaw, n: usize, y: usize, c: usize) -> Result<Vec<f64>> {
        let (nh, no) = (self.n_hidden(), self.n_obs());
        let mut v = vec![0.0; nh];
        for x in 0..nh {
            let w = m.get(x, y);
            if w > 0.0 {
                let row = self.kernels.hidden_row(n, x, c, law)?;
                v.iter_mut().zip(row.iter()).for_each(|(t, p)| *t += w * p);
            }
        }
        let mut out = vec![0.0; nh * no];
        for (k, &vk) in v.iter().enumerate() {
            if vk > 0.0 {
                let h = self.kernels.obs_row(n, k, y, c)?;
                out[k * no..(k + 1) * no]
                    .iter_mut()
                    .zip(h.iter())
                    .for_each(|(o, h)| *o = vk * h);
            }
        }
        Ok(out)
    }
}

/// Joint law at `n + 1` obtained from `m` at time `n` under `map`.
pub fn push_marginal(problem: &QuantizedProblem, m: &JointMeasure, map: &[usize], n: usize) -> Result<JointMeasure> {
    problem.check_map(map)?;
    let law = problem.hidden_law(m, n)?;
    let (nh, no) = (problem.n_hidden(), problem.n_obs());
    let mut out = vec![0.0; nh * no];
    for y in 0..no {
        if (0..nh).any(|x| m.get(x, y) > 0.0) {
            let block = problem.column_push(m, &law, n, y, map[y])?;
            out.iter_mut().zip(&block).for_each(|(o, b)| *o += b);
        }
    }
    JointMeasure::new(nh, no, out)
}

/// Expected running cost at time `n` of `m` under `map`.
pub fn cost_running(problem: &QuantizedProblem, m: &JointMeasure, map: &[usize], n: usize) -> Result<f64> {
    problem.check_map(map)?;
    let ctx = StateContext::new(problem, m, n)?;
    Ok(ctx.running(map))
}

/// Expected terminal cost of `m`.
pub fn cost_terminal(problem: &QuantizedProblem, m: &JointMeasure) -> Result<f64> {
    let t = problem.horizon();
    let law = problem.hidden_law(m, t)?;
    let grid = problem.grids.hidden(t);
    let first = m.first_marginal();
    Ok((0..grid.len())
        .filter(|&x| first.weight(x) > 0.0)
        .map(|x| first.weight(x) * problem.model.terminal_cost(grid.center(x), &law))
        .sum())
}

/// Exact forward value of a closed-loop policy on the quantized chain.
pub fn evaluate_policy(problem: &QuantizedProblem, policy: &ClosedLoopPolicy) -> Result<f64> {
    if policy.maps.len() != problem.horizon() {
        return Err(Error::config("policy length differs from the horizon"));
    }
    let mut m = problem.initial.clone();
    let mut total = 0.0;
    for (n, map) in policy.maps.iter().enumerate() {
        total += cost_running(problem, &m, map, n)?;
        m = push_marginal(problem, &m, map, n)?;
    }
    Ok(total + cost_terminal(problem, &m)?)
}

/// Hidden marginals `mu_0, ..., mu_T` under a closed-loop policy.
pub fn hidden_marginal_flow(problem: &QuantizedProblem, policy: &ClosedLoopPolicy) -> Result<Vec<DiscreteMeasure>> {
    let mut m = problem.initial.clone();
    let mut flow = vec![m.first_marginal()];
    for (n, map) in policy.maps.iter().enumerate() {
        m = push_marginal(problem, &m, map, n)?;
        flow.push(m.first_marginal());
    }
    Ok(flow)
}

/// Precomputed per-column costs and push blocks of one state, so that any
/// control map can be scored with `O(n_obs)` block additions.
pub(crate) struct StateContext {
    n_hidden: usize,
    n_obs: usize,
    n_controls: usize,
    active: Vec<bool>,
    col_cost: Vec<f64>,
    blocks: Vec<Option<Vec<f64>>>,
}

impl StateContext {
    pub(crate) fn new(problem: &QuantizedProblem, m: &JointMeasure, n: usize) -> Result<Self> {
        let (nh, no, nc) = (problem.n_hidden(), problem.n_obs(), problem.n_controls());
        let law = problem.hidden_law(m, n)?;
        let grid = problem.grids.hidden(n);
        let active: Vec<bool> = (0..no).map(|y| (0..nh).any(|x| m.get(x, y) > 0.0)).collect();
        let mut col_cost = vec![0.0; no * nc];
        for c in 0..nc {
            let a = problem.model.control(c);
            for x in 0..nh {
                if (0..no).all(|y| m.get(x, y) == 0.0) {
                    continue;
                }
                let cost = problem.model.running_cost(n, grid.center(x), &law, a);
                for y in 0..no {
                    col_cost[y * nc + c] += m.get(x, y) * cost;
                }
            }
        }
        let with_push = n < problem.horizon();
        let mut blocks = Vec::with_capacity(no * nc);
        for (y, &act) in active.iter().enumerate() {
            for c in 0..nc {
                blocks.push(if act && with_push {
                    Some(problem.column_push(m, &law, n, y, c)?)
                } else {
                    None
                });
            }
        }
        Ok(StateContext {
            n_hidden: nh,
            n_obs: no,
            n_controls: nc,
            active,
            col_cost,
            blocks,
        })
    }

    pub(crate) fn running(&self, map: &[usize]) -> f64 {
        (0..self.n_obs)
            .map(|y| self.col_cost[y * self.n_controls + map[y]])
            .sum()
    }

    pub(crate) fn push(&self, map: &[usize]) -> Result<JointMeasure> {
        let mut out = vec![0.0; self.n_hidden * self.n_obs];
        for y in 0..self.n_obs {
            if let Some(b) = &self.blocks[y * self.n_controls + map[y]] {
                out.iter_mut().zip(b).for_each(|(o, b)| *o += b);
            }
        }
        JointMeasure::new(self.n_hidden, self.n_obs, out)
    }

    /// Observation cells with positive mass.
    pub(crate) fn active(&self) -> &[bool] {
        &self.active
    }
}
