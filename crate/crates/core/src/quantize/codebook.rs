use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dp::{check_enumeration, quantized_dp, ControlMap, OptimizerMode, QuantizedProblem, StateContext};
use crate::error::{Error, Result};
use crate::exec;
use crate::measures::JointMeasure;
use crate::rng;

/// Weight matrices closer than this entrywise are treated as one codeword.
pub const DEDUP_TOL: f64 = 1e-9;

/// A finite set of joint-law weight matrices of a common shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureCodebook {
    rows: usize,
    cols: usize,
    codewords: Vec<JointMeasure>,
}

impl MeasureCodebook {
    pub fn new(rows: usize, cols: usize, codewords: Vec<JointMeasure>) -> Result<Self> {
        if codewords.iter().any(|c| c.rows() != rows || c.cols() != cols) {
            return Err(Error::config("codeword shape mismatch"));
        }
        Ok(MeasureCodebook { rows, cols, codewords })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn get(&self, l: usize) -> &JointMeasure {
        &self.codewords[l]
    }

    pub fn codewords(&self) -> &[JointMeasure] {
        &self.codewords
    }

    /// Index of the nearest codeword in Frobenius distance; ties go to the
    /// smallest index.
    pub fn project(&self, q: &JointMeasure) -> Result<usize> {
        if self.codewords.is_empty() {
            return Err(Error::EmptyCodebook);
        }
        if q.rows() != self.rows || q.cols() != self.cols {
            return Err(Error::config("measure shape does not match the codebook"));
        }
        let q = q.as_slice();
        let mut best = (0, f64::INFINITY);
        for (l, c) in self.codewords.iter().enumerate() {
            let mut d = 0.0;
            for (a, b) in c.as_slice().iter().zip(q) {
                d += (a - b) * (a - b);
                if d >= best.1 {
                    break;
                }
            }
            if d < best.1 {
                best = (l, d);
            }
        }
        Ok(best.0)
    }
}

/// Nearest codeword of `q` in `codebook`.
pub fn codebook_project(codebook: &MeasureCodebook, q: &JointMeasure) -> Result<usize> {
    codebook.project(q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookOptions {
    /// Upper bound on the number of codewords.
    pub cap: usize,
    /// Optimizer used by the DP; it decides which control maps are explored.
    pub mode: OptimizerMode,
    /// Rounds of exploration refined by maps chosen by the DP.
    pub rounds: usize,
    /// Upper bound on the pool of explored maps when maps are not enumerated.
    pub max_pool: usize,
    pub cluster_iters: usize,
    pub seed: u64,
}

impl Default for CodebookOptions {
    fn default() -> Self {
        CodebookOptions {
            cap: 512,
            mode: OptimizerMode::Auto,
            rounds: 3,
            max_pool: 64,
            cluster_iters: 25,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CodebookReport {
    /// Distinct pushed laws found at each time `1..=horizon` in the last round.
    pub reachable: Vec<usize>,
    /// Codewords kept per time after clustering.
    pub kept: Vec<usize>,
    pub size: usize,
    /// True when no level had to be clustered.
    pub lossless: bool,
    pub rounds: usize,
    pub pool_size: usize,
}

fn dedup_key(m: &JointMeasure) -> Vec<i64> {
    m.as_slice().iter().map(|w| (w / DEDUP_TOL).round() as i64).collect()
}

fn dedup(items: Vec<JointMeasure>) -> Vec<JointMeasure> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for m in items {
        if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(dedup_key(&m)) {
            e.insert(());
            out.push(m);
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means in the Frobenius metric with seeded k-means++ initialization.
fn cluster(points: &[JointMeasure], k: usize, iters: usize, seed: u64, level: usize) -> Result<Vec<JointMeasure>> {
    let (rows, cols) = (points[0].rows(), points[0].cols());
    let mut r = rng::stream(seed, &[0xc0de, level as u64]);
    let mut centers: Vec<Vec<f64>> = vec![points[r.random_range(0..points.len())].as_slice().to_vec()];
    let mut d2: Vec<f64> = exec::map_range(points.len(), |p| sq_dist(points[p].as_slice(), &centers[0]));
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut u = r.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|d| *d > 0.0).unwrap_or(0);
        for (p, d) in d2.iter().enumerate() {
            if u < *d {
                pick = p;
                break;
            }
            u -= d;
        }
        let c = points[pick].as_slice().to_vec();
        d2 = exec::map_range(points.len(), |p| d2[p].min(sq_dist(points[p].as_slice(), &c)));
        centers.push(c);
    }
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..iters {
        let next: Vec<usize> = exec::map_range(points.len(), |p| {
            let mut best = (0, f64::INFINITY);
            for (l, c) in centers.iter().enumerate() {
                let d = sq_dist(points[p].as_slice(), c);
                if d < best.1 {
                    best = (l, d);
                }
            }
            best.0
        });
        if next == assignment {
            break;
        }
        assignment = next;
        let mut sums = vec![vec![0.0; rows * cols]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &l) in assignment.iter().enumerate() {
            counts[l] += 1;
            sums[l].iter_mut().zip(points[p].as_slice()).for_each(|(s, v)| *s += v);
        }
        for (l, c) in centers.iter_mut().enumerate() {
            if counts[l] > 0 {
                *c = sums[l].iter().map(|s| s / counts[l] as f64).collect();
            }
        }
    }
    centers
        .into_iter()
        .map(|c| {
            let mass: f64 = c.iter().sum();
            JointMeasure::new(rows, cols, c.into_iter().map(|v| v / mass).collect())
        })
        .collect()
}

/// All maps over the active cells, inactive cells pinned to control 0.
fn all_maps(active: &[bool], n_controls: usize) -> Vec<ControlMap> {
    let free: Vec<usize> = (0..active.len()).filter(|&y| active[y]).collect();
    let mut out = Vec::new();
    let mut map = vec![0; active.len()];
    'outer: loop {
        out.push(map.clone());
        for &y in free.iter().rev() {
            map[y] += 1;
            if map[y] < n_controls {
                continue 'outer;
            }
            map[y] = 0;
        }
        return out;
    }
}

fn canonical(map: &[usize], active: &[bool]) -> ControlMap {
    map.iter().zip(active).map(|(&c, &a)| if a { c } else { 0 }).collect()
}

struct Exploration {
    levels: Vec<Vec<JointMeasure>>,
    reachable: Vec<usize>,
    used_pool: bool,
}

fn explore(
    problem: &QuantizedProblem,
    pool: &[ControlMap],
    per_level: usize,
    opts: &CodebookOptions,
) -> Result<Exploration> {
    let nc = problem.n_controls();
    let mut frontier = vec![problem.initial.clone()];
    let mut levels = Vec::new();
    let mut reachable = Vec::new();
    let mut used_pool = false;
    for n in 0..problem.horizon() {
        let per_state = exec::try_map_range(frontier.len(), |s| -> Result<(Vec<JointMeasure>, bool)> {
            let ctx = StateContext::new(problem, &frontier[s], n)?;
            let active = ctx.active();
            let free = active.iter().filter(|a| **a).count();
            let enumerate = matches!(opts.mode.resolve(free, nc), OptimizerMode::Enumerate);
            let maps: Vec<ControlMap> = if enumerate {
                check_enumeration(free, nc)?;
                all_maps(active, nc)
            } else {
                let mut seen: Vec<ControlMap> = pool.iter().map(|m| canonical(m, active)).collect();
                seen.sort();
                seen.dedup();
                seen
            };
            let pushes = maps.iter().map(|m| ctx.push(m)).collect::<Result<Vec<_>>>()?;
            Ok((dedup(pushes), !enumerate))
        })?;
        let mut level = Vec::new();
        for (p, pooled) in per_state {
            used_pool |= pooled;
            level.extend(p);
        }
        let level = dedup(level);
        reachable.push(level.len());
        let level = if level.len() > per_level {
            cluster(&level, per_level, opts.cluster_iters, opts.seed, n + 1)?
        } else {
            level
        };
        levels.push(level.clone());
        frontier = level;
    }
    Ok(Exploration {
        levels,
        reachable,
        used_pool,
    })
}

/// Builds a codebook from the joint laws reachable from the initial law.
///
/// Each time step pushes every frontier law through the candidate control
/// maps: all maps when the optimizer would enumerate them, otherwise a pool
/// made of the constant maps and the minimizers found by the DP in the
/// previous round. Levels that exceed their share of the cap are clustered.
pub fn codebook_build(problem: &QuantizedProblem, opts: &CodebookOptions) -> Result<(MeasureCodebook, CodebookReport)> {
    let t = problem.horizon();
    let (nh, no, nc) = (problem.n_hidden(), problem.n_obs(), problem.n_controls());
    if t == 0 {
        return Ok((
            MeasureCodebook::new(nh, no, Vec::new())?,
            CodebookReport {
                lossless: true,
                ..Default::default()
            },
        ));
    }
    if opts.cap == 0 {
        return Err(Error::config("codebook cap must be positive"));
    }
    let per_level = (opts.cap / t).max(1);
    let mut pool: Vec<ControlMap> = (0..nc).map(|c| vec![c; no]).collect();
    let mut rounds = 0;
    loop {
        rounds += 1;
        let ex = explore(problem, &pool, per_level, opts)?;
        let kept: Vec<usize> = ex.levels.iter().map(Vec::len).collect();
        let lossless = ex.reachable.iter().zip(&kept).all(|(r, k)| r == k);
        let codebook = MeasureCodebook::new(nh, no, dedup(ex.levels.concat()))?;
        let report = CodebookReport {
            reachable: ex.reachable,
            kept,
            size: codebook.len(),
            lossless,
            rounds,
            pool_size: pool.len(),
        };
        if !ex.used_pool || rounds >= opts.rounds.max(1) {
            return Ok((codebook, report));
        }
        let sol = quantized_dp(problem, &codebook, opts.mode)?;
        let mut freq: BTreeMap<ControlMap, usize> = BTreeMap::new();
        for entry in sol.table.slices[..t].iter().flatten() {
            *freq.entry(entry.map.clone()).or_default() += 1;
        }
        let mut ranked: Vec<(ControlMap, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let before = pool.len();
        for (map, _) in ranked {
            if pool.len() >= opts.max_pool.max(nc) {
                break;
            }
            if !pool.contains(&map) {
                pool.push(map);
            }
        }
        log::info!(
            "codebook round {rounds}: {} codewords, pool {} maps",
            codebook.len(),
            pool.len()
        );
        if pool.len() == before {
            return Ok((codebook, report));
        }
    }
}
