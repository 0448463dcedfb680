use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::QuantizedProblem;
use crate::error::{Error, Result};
use crate::measures::{IndexPath, PathMeasure};
use crate::model::HiddenLaw;

/// Control index per observation history (closed loop: per last observation).
pub type HistoryMap = BTreeMap<Vec<usize>, usize>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactOptions {
    /// Restrict controls to functions of the current observation cell.
    pub closed_loop_only: bool,
    /// Refuse instances whose enumeration size exceeds this.
    pub budget: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            closed_loop_only: false,
            budget: 1e9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub value: f64,
    /// Minimizing maps along the optimal branch, one per decision time.
    pub maps: Vec<HistoryMap>,
    pub evaluated_branches: u64,
}

fn history_key(path: &[(usize, usize)], closed_loop: bool) -> Vec<usize> {
    if closed_loop {
        vec![path.last().expect("nonempty path").1]
    } else {
        path.iter().map(|p| p.1).collect()
    }
}

fn law_at(problem: &QuantizedProblem, m: &PathMeasure, n: usize) -> Result<HiddenLaw> {
    HiddenLaw::on_grid(problem.grids.hidden(n), &m.marginal(n)?.first_marginal())
}

/// Extends every path by one step, choosing the control from the path.
pub fn push_path_measure<F>(problem: &QuantizedProblem, m: &PathMeasure, control_of: F) -> Result<PathMeasure>
where
    F: Fn(&[(usize, usize)]) -> usize,
{
    let n = m.horizon();
    let law = law_at(problem, m, n)?;
    let no = problem.n_obs();
    let mut out: BTreeMap<IndexPath, f64> = BTreeMap::new();
    for (path, w) in m.iter() {
        if w == 0.0 {
            continue;
        }
        let (x, y) = *path.last().expect("nonempty path");
        let c = control_of(path);
        if c >= problem.n_controls() {
            return Err(Error::Index {
                index: c,
                len: problem.n_controls(),
            });
        }
        let row = problem.kernels.hidden_row(n, x, c, &law)?;
        for (k, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let h = problem.kernels.obs_row(n, k, y, c)?;
            for (j, &q) in h.iter().enumerate().take(no) {
                if q > 0.0 {
                    let mut ext = path.clone();
                    ext.push((k, j));
                    out.insert(ext, w * p * q);
                }
            }
        }
    }
    Ok(PathMeasure::from_parts(m.rows(), m.cols(), n + 1, out))
}

fn terminal(problem: &QuantizedProblem, m: &PathMeasure) -> Result<f64> {
    let t = m.horizon();
    let law = law_at(problem, m, t)?;
    let grid = problem.grids.hidden(t);
    Ok(m.iter()
        .map(|(p, w)| w * problem.model.terminal_cost(grid.center(p[t].0), &law))
        .sum())
}

fn solve(
    problem: &QuantizedProblem,
    m: &PathMeasure,
    closed_loop: bool,
    branches: &mut u64,
) -> Result<(f64, Vec<HistoryMap>)> {
    let n = m.horizon();
    if n == problem.horizon() {
        *branches += 1;
        return Ok((terminal(problem, m)?, Vec::new()));
    }
    let law = law_at(problem, m, n)?;
    let grid = problem.grids.hidden(n);
    let nc = problem.n_controls();
    let keys: Vec<Vec<usize>> = m
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(p, _)| history_key(p, closed_loop))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&Vec<usize>, usize> = keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
    // Expected running cost split by history and control.
    let mut cost = vec![0.0; keys.len() * nc];
    for (p, w) in m.iter() {
        let key = index[&history_key(p, closed_loop)];
        for c in 0..nc {
            cost[key * nc + c] +=
                w * problem
                    .model
                    .running_cost(n, grid.center(p[n].0), &law, problem.model.control(c));
        }
    }
    // At the last decision the terminal hidden marginal is a sum of
    // per-(history, control) contributions, so paths need not be rebuilt.
    let last = n + 1 == problem.horizon();
    let next_grid = problem.grids.hidden(n + 1);
    let nh = next_grid.len();
    let mut reach = Vec::new();
    if last {
        reach = vec![0.0; keys.len() * nc * nh];
        for (p, w) in m.iter().filter(|(_, w)| *w > 0.0) {
            let key = index[&history_key(p, closed_loop)];
            for c in 0..nc {
                let row = problem.kernels.hidden_row(n, p[n].0, c, &law)?;
                for (x, q) in row.iter().enumerate() {
                    reach[(key * nc + c) * nh + x] += w * q;
                }
            }
        }
    }
    let points: Vec<f64> = next_grid.centers().flat_map(|c| c.iter().copied()).collect();
    let mut assign = vec![0usize; keys.len()];
    let mut best: Option<(f64, Vec<HistoryMap>)> = None;
    loop {
        let running: f64 = assign.iter().enumerate().map(|(k, &c)| cost[k * nc + c]).sum();
        let (v, rest) = if last {
            let mut mu = vec![0.0; nh];
            for (k, &c) in assign.iter().enumerate() {
                mu.iter_mut()
                    .zip(&reach[(k * nc + c) * nh..][..nh])
                    .for_each(|(a, b)| *a += b);
            }
            let law_next = HiddenLaw::new(next_grid.dim(), points.clone(), mu.clone())?;
            *branches += 1;
            let v = mu
                .iter()
                .enumerate()
                .map(|(x, w)| w * problem.model.terminal_cost(next_grid.center(x), &law_next))
                .sum();
            (v, Vec::new())
        } else {
            let next = push_path_measure(problem, m, |p| assign[index[&history_key(p, closed_loop)]])?;
            solve(problem, &next, closed_loop, branches)?
        };
        let total = running + v;
        if best.as_ref().is_none_or(|b| total < b.0) {
            let map: HistoryMap = keys.iter().cloned().zip(assign.iter().copied()).collect();
            let mut maps = vec![map];
            maps.extend(rest);
            best = Some((total, maps));
        }
        let mut pos = keys.len();
        loop {
            if pos == 0 {
                return Ok(best.expect("at least one assignment"));
            }
            pos -= 1;
            assign[pos] += 1;
            if assign[pos] < nc {
                break;
            }
            assign[pos] = 0;
        }
    }
}

/// Exact dynamic programming over path laws by enumeration of control maps
/// on observation histories. Intended as a reference on tiny instances.
pub fn exact_path_dp(problem: &QuantizedProblem, opts: &ExactOptions) -> Result<ExactSolution> {
    let t = problem.horizon() as i32;
    let (nh, no, nc) = (
        problem.n_hidden() as f64,
        problem.n_obs() as f64,
        problem.n_controls() as f64,
    );
    let histories: f64 = (1..=t)
        .map(|k| if opts.closed_loop_only { no } else { no.powi(k) })
        .sum();
    let count = nc.powf(histories) * (nh * no).powi(t + 1);
    if !(count <= opts.budget) {
        return Err(Error::Budget {
            what: "path-space dynamic programming",
            count,
            budget: opts.budget,
        });
    }
    let mut branches = 0;
    let start = PathMeasure::from_initial(&problem.initial);
    let (value, maps) = solve(problem, &start, opts.closed_loop_only, &mut branches)?;
    Ok(ExactSolution {
        value,
        maps,
        evaluated_branches: branches,
    })
}
