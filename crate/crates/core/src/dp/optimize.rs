use serde::{Deserialize, Serialize};

use super::ControlMap;
use crate::error::{Error, Result};

/// Enumerate automatically when the number of maps is at most this.
pub const AUTO_ENUMERATE_LIMIT: f64 = 4096.0;
/// Never enumerate more maps than this.
pub const HARD_ENUMERATE_LIMIT: f64 = 1e6;
const MAX_SWEEPS: usize = 5;

/// How the minimization over control maps is carried out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerMode {
    /// Enumeration when affordable, coordinate descent otherwise.
    Auto,
    Enumerate,
    #[serde(alias = "cd")]
    CoordinateDescent,
    Constant,
}

impl std::str::FromStr for OptimizerMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(OptimizerMode::Auto),
            "enumerate" => Ok(OptimizerMode::Enumerate),
            "cd" | "coordinate_descent" => Ok(OptimizerMode::CoordinateDescent),
            "constant" => Ok(OptimizerMode::Constant),
            other => Err(Error::config(format!("unknown optimizer mode {other}"))),
        }
    }
}

impl std::fmt::Display for OptimizerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerMode::Auto => "auto",
            OptimizerMode::Enumerate => "enumerate",
            OptimizerMode::CoordinateDescent => "cd",
            OptimizerMode::Constant => "constant",
        })
    }
}

impl OptimizerMode {
    /// Resolves `Auto` for a given number of free cells and controls.
    pub fn resolve(self, free_cells: usize, n_controls: usize) -> OptimizerMode {
        match self {
            OptimizerMode::Auto if (n_controls as f64).powi(free_cells as i32) <= AUTO_ENUMERATE_LIMIT => {
                OptimizerMode::Enumerate
            }
            OptimizerMode::Auto => OptimizerMode::CoordinateDescent,
            m => m,
        }
    }
}

/// Refuses enumerations beyond [`HARD_ENUMERATE_LIMIT`].
pub(crate) fn check_enumeration(free_cells: usize, n_controls: usize) -> Result<()> {
    let count = (n_controls as f64).powi(free_cells as i32);
    if count > HARD_ENUMERATE_LIMIT {
        return Err(Error::Budget {
            what: "control maps to enumerate",
            count,
            budget: HARD_ENUMERATE_LIMIT,
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapChoice {
    pub map: ControlMap,
    pub value: f64,
    /// False when coordinate descent stopped at the sweep limit while still
    /// improving.
    pub converged: bool,
    pub evaluations: usize,
}

/// Minimizes `objective` over control maps `0..n_obs -> 0..n_controls`.
///
/// Cells flagged inactive (zero mass) do not influence the objective; they
/// are pinned to control 0. Ties go to the lexicographically smallest map.
pub fn optimize_control_map<F>(
    n_obs: usize,
    n_controls: usize,
    active: Option<&[bool]>,
    mode: OptimizerMode,
    mut objective: F,
) -> Result<MapChoice>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    if n_controls == 0 || n_obs == 0 {
        return Err(Error::config("empty control set or observation grid"));
    }
    let free: Vec<usize> = (0..n_obs).filter(|&y| active.is_none_or(|a| a[y])).collect();
    let mut evaluations = 0;
    let mut eval = |map: &[usize], evaluations: &mut usize| {
        *evaluations += 1;
        objective(map)
    };
    let constant = |c: usize| {
        let mut m = vec![0; n_obs];
        free.iter().for_each(|&y| m[y] = c);
        m
    };
    let mut best_constant = (constant(0), f64::INFINITY);
    let mode = mode.resolve(free.len(), n_controls);
    if mode != OptimizerMode::Enumerate {
        for c in 0..n_controls {
            let m = constant(c);
            let v = eval(&m, &mut evaluations)?;
            if v < best_constant.1 {
                best_constant = (m, v);
            }
        }
    }
    match mode {
        OptimizerMode::Constant => Ok(MapChoice {
            map: best_constant.0,
            value: best_constant.1,
            converged: true,
            evaluations,
        }),
        OptimizerMode::Enumerate => {
            check_enumeration(free.len(), n_controls)?;
            let mut map = vec![0; n_obs];
            let mut best = (map.clone(), eval(&map, &mut evaluations)?);
            // Odometer with the first free cell most significant.
            'outer: loop {
                for &y in free.iter().rev() {
                    map[y] += 1;
                    if map[y] < n_controls {
                        let v = eval(&map, &mut evaluations)?;
                        if v < best.1 {
                            best = (map.clone(), v);
                        }
                        continue 'outer;
                    }
                    map[y] = 0;
                }
                break;
            }
            Ok(MapChoice {
                map: best.0,
                value: best.1,
                converged: true,
                evaluations,
            })
        }
        OptimizerMode::CoordinateDescent | OptimizerMode::Auto => {
            let (mut map, mut value) = best_constant;
            let mut converged = false;
            for _ in 0..MAX_SWEEPS {
                let mut changed = false;
                for &y in &free {
                    let current = map[y];
                    for c in 0..n_controls {
                        if c == current {
                            continue;
                        }
                        let prev = map[y];
                        map[y] = c;
                        let v = eval(&map, &mut evaluations)?;
                        if v < value {
                            value = v;
                            changed = true;
                        } else {
                            map[y] = prev;
                        }
                    }
                }
                if !changed {
                    converged = true;
                    break;
                }
            }
            if !converged {
                log::warn!("coordinate descent hit the sweep limit without converging");
            }
            Ok(MapChoice {
                map,
                value,
                converged,
                evaluations,
            })
        }
    }
}
