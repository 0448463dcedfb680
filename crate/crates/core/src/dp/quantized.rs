use serde::{Deserialize, Serialize};

use super::optimize::{optimize_control_map, OptimizerMode};
use super::{cost_terminal, ClosedLoopPolicy, ControlMap, QuantizedProblem, StateContext};
use crate::error::{Error, Result};
use crate::exec;
use crate::measures::JointMeasure;
use crate::quantize::MeasureCodebook;

/// A DP state: the exact initial law or a codeword.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKey {
    Initial,
    Codeword(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueEntry {
    pub state: StateKey,
    pub value: f64,
    /// Minimizing control map; empty at the terminal time.
    pub map: ControlMap,
    /// Codeword the pushed law projects to under `map`.
    pub next: Option<usize>,
    pub converged: bool,
}

/// Values and minimizers per time: one entry for the initial law at time 0,
/// one per codeword at later times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub slices: Vec<Vec<ValueEntry>>,
}

impl ValueTable {
    pub fn entry(&self, n: usize, state: StateKey) -> Option<&ValueEntry> {
        let slice = self.slices.get(n)?;
        match state {
            StateKey::Initial => slice.first().filter(|e| e.state == StateKey::Initial),
            StateKey::Codeword(l) => slice.get(l),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpSolution {
    /// Approximate optimal value at the initial law.
    pub value: f64,
    /// Minimizing maps along the codeword path started at the initial law.
    pub policy: ClosedLoopPolicy,
    /// Codewords visited at times `1..=horizon` by the policy.
    pub path: Vec<usize>,
    pub table: ValueTable,
    /// False when any coordinate-descent run stopped at its sweep limit.
    pub converged: bool,
}

fn solve_state(
    problem: &QuantizedProblem,
    codebook: &MeasureCodebook,
    m: &JointMeasure,
    n: usize,
    next_values: &[f64],
    mode: OptimizerMode,
    state: StateKey,
) -> Result<ValueEntry> {
    let ctx = StateContext::new(problem, m, n)?;
    let choice = optimize_control_map(problem.n_obs(), problem.n_controls(), Some(ctx.active()), mode, |map| {
        let pushed = ctx.push(map)?;
        Ok(ctx.running(map) + next_values[codebook.project(&pushed)?])
    })?;
    let next = codebook.project(&ctx.push(&choice.map)?)?;
    Ok(ValueEntry {
        state,
        value: choice.value,
        map: choice.map,
        next: Some(next),
        converged: choice.converged,
    })
}

/// Backward recursion on the codebook.
///
/// At times `1..horizon` every codeword is a state; the law pushed forward by
/// a candidate map is projected onto the codebook to read the continuation
/// value. Time 0 is evaluated at the exact initial law.
pub fn quantized_dp(problem: &QuantizedProblem, codebook: &MeasureCodebook, mode: OptimizerMode) -> Result<DpSolution> {
    let t = problem.horizon();
    if t > 0 && codebook.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    if t > 0 && (codebook.rows() != problem.n_hidden() || codebook.cols() != problem.n_obs()) {
        return Err(Error::config("codebook shape does not match the grids"));
    }
    let mut slices: Vec<Vec<ValueEntry>> = vec![Vec::new(); t + 1];
    if t == 0 {
        let value = cost_terminal(problem, &problem.initial)?;
        slices[0].push(ValueEntry {
            state: StateKey::Initial,
            value,
            map: Vec::new(),
            next: None,
            converged: true,
        });
        return Ok(DpSolution {
            value,
            policy: ClosedLoopPolicy { maps: Vec::new() },
            path: Vec::new(),
            table: ValueTable { slices },
            converged: true,
        });
    }
    slices[t] = exec::try_map_range(codebook.len(), |l| {
        Ok(ValueEntry {
            state: StateKey::Codeword(l),
            value: cost_terminal(problem, codebook.get(l))?,
            map: Vec::new(),
            next: None,
            converged: true,
        })
    })?;
    for n in (1..t).rev() {
        let next_values: Vec<f64> = slices[n + 1].iter().map(|e| e.value).collect();
        slices[n] = exec::try_map_range(codebook.len(), |l| {
            solve_state(
                problem,
                codebook,
                codebook.get(l),
                n,
                &next_values,
                mode,
                StateKey::Codeword(l),
            )
        })?;
        log::debug!("quantized dp: time {n} done");
    }
    let next_values: Vec<f64> = slices[1].iter().map(|e| e.value).collect();
    slices[0] = vec![solve_state(
        problem,
        codebook,
        &problem.initial,
        0,
        &next_values,
        mode,
        StateKey::Initial,
    )?];

    let mut maps = vec![slices[0][0].map.clone()];
    let mut path = Vec::with_capacity(t);
    let mut current = slices[0][0].next.expect("non-terminal entry has a successor");
    for slice in slices.iter().take(t).skip(1) {
        path.push(current);
        maps.push(slice[current].map.clone());
        current = slice[current].next.expect("non-terminal entry has a successor");
    }
    path.push(current);
    let converged = slices.iter().flatten().all(|e| e.converged);
    if !converged {
        log::warn!("quantized dp: some coordinate-descent runs did not converge");
    }
    Ok(DpSolution {
        value: slices[0][0].value,
        policy: ClosedLoopPolicy { maps },
        path,
        table: ValueTable { slices },
        converged,
    })
}
