use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::quadrature::{standard_gaussian_rule, WeightedSample};
use super::Grid;
use crate::error::{Error, Result};
use crate::exec;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LloydOptions {
    pub max_iters: usize,
    /// Stop once no center moves more than this (Euclidean norm).
    pub tol: f64,
    pub seed: u64,
}

impl Default for LloydOptions {
    fn default() -> Self {
        LloydOptions {
            max_iters: 500,
            tol: 1e-12,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LloydResult {
    pub grid: Grid,
    pub iterations: usize,
    pub converged: bool,
    /// Distortion of the initial grid followed by one entry per iteration.
    pub distortion: Vec<f64>,
    pub reseeded: usize,
}

/// Target for `N(0, I_dim)`: a dense midpoint rule for `dim <= 2`, equally
/// weighted Monte Carlo draws otherwise.
pub fn standard_gaussian_target(dim: usize, mc_samples: usize, seed: u64) -> WeightedSample {
    if dim <= 2 {
        return standard_gaussian_rule(dim);
    }
    let mut r = rng::stream(seed, &[0x11_0d, dim as u64]);
    let points = (0..mc_samples * dim).map(|_| r.sample(StandardNormal)).collect();
    WeightedSample {
        dim,
        points,
        weights: vec![1.0 / mc_samples as f64; mc_samples],
    }
}

/// Lloyd grid of size `n` for the standard Gaussian on `R^dim`.
pub fn lloyd_gaussian(dim: usize, n: usize, mc_samples: usize, opts: &LloydOptions) -> Result<LloydResult> {
    let target = standard_gaussian_target(dim, mc_samples, opts.seed);
    lloyd(&target, n, opts)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn assign(target: &WeightedSample, centers: &[Vec<f64>]) -> Vec<(usize, f64)> {
    exec::map_range(target.len(), |k| {
        let p = target.point(k);
        let mut best = (0, f64::INFINITY);
        for (i, c) in centers.iter().enumerate() {
            let d = sq_dist(p, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    })
}

/// k-means++ seeding driven by a seeded stream.
fn seed_centers(target: &WeightedSample, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, &[0x11_0d, 1]);
    let pick = |r: &mut rng::StreamRng, scores: &[f64]| {
        let total: f64 = scores.iter().sum();
        let mut u = r.random::<f64>() * total;
        for (k, s) in scores.iter().enumerate() {
            if u < *s {
                return k;
            }
            u -= s;
        }
        scores.iter().rposition(|s| *s > 0.0).unwrap_or(0)
    };
    let first = pick(&mut r, &target.weights);
    let mut centers = vec![target.point(first).to_vec()];
    let mut d2: Vec<f64> = (0..target.len())
        .map(|k| sq_dist(target.point(k), &centers[0]))
        .collect();
    while centers.len() < n {
        let scores: Vec<f64> = d2.iter().zip(&target.weights).map(|(d, w)| d * w).collect();
        if scores.iter().all(|s| *s <= 0.0) {
            break;
        }
        let k = pick(&mut r, &scores);
        let c = target.point(k).to_vec();
        for (j, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(target.point(j), &c));
        }
        centers.push(c);
    }
    centers
}

/// Lloyd's fixed-point iteration on a weighted point set.
///
/// A cell left empty is reseeded at the target point with the largest
/// weighted squared distance to its current center.
pub fn lloyd(target: &WeightedSample, n: usize, opts: &LloydOptions) -> Result<LloydResult> {
    if n == 0 {
        return Err(Error::config("grid size must be positive"));
    }
    let distinct = {
        let mut pts: Vec<&[f64]> = (0..target.len())
            .filter(|&k| target.weights[k] > 0.0)
            .map(|k| target.point(k))
            .collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        pts.dedup();
        pts.len()
    };
    if distinct < n {
        return Err(Error::config(format!(
            "target has {distinct} support points, fewer than {n}"
        )));
    }
    let mut centers = seed_centers(target, n, opts.seed);
    let mut distortion = Vec::new();
    let mut reseeded = 0;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let cells = assign(target, &centers);
        distortion.push(cells.iter().zip(&target.weights).map(|((_, d), w)| d * w).sum());
        if converged || iterations == opts.max_iters {
            break;
        }
        let dim = target.dim;
        let mut mass = vec![0.0; n];
        let mut sum = vec![vec![0.0; dim]; n];
        for (k, &(i, _)) in cells.iter().enumerate() {
            let w = target.weights[k];
            mass[i] += w;
            for (s, p) in sum[i].iter_mut().zip(target.point(k)) {
                *s += w * p;
            }
        }
        let mut shift = 0.0f64;
        for i in 0..n {
            let next: Vec<f64> = if mass[i] > 0.0 {
                sum[i].iter().map(|s| s / mass[i]).collect()
            } else {
                let far = (0..target.len())
                    .max_by(|&a, &b| {
                        let da = cells[a].1 * target.weights[a];
                        let db = cells[b].1 * target.weights[b];
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                log::warn!("lloyd: cell {i} empty at iteration {iterations}, reseeding");
                reseeded += 1;
                target.point(far).to_vec()
            };
            shift = shift.max(sq_dist(&next, &centers[i]).sqrt());
            centers[i] = next;
        }
        iterations += 1;
        converged = shift <= opts.tol;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| centers[a].partial_cmp(&centers[b]).unwrap_or(std::cmp::Ordering::Equal));
    let grid = Grid::new(order.into_iter().map(|i| centers[i].clone()).collect())?;
    Ok(LloydResult {
        grid,
        iterations,
        converged,
        distortion,
        reseeded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_scalar_grid_is_symmetric() {
        let r = lloyd_gaussian(1, 2, 0, &LloydOptions::default()).unwrap();
        let expected = (2.0 / std::f64::consts::PI).sqrt();
        assert!((r.grid.center(0)[0] + expected).abs() < 1e-3);
        assert!((r.grid.center(1)[0] - expected).abs() < 1e-3);
        assert!(r.converged);
    }

    #[test]
    fn single_center_is_the_mean() {
        let r = lloyd_gaussian(2, 1, 0, &LloydOptions::default()).unwrap();
        assert!(r.grid.center(0).iter().all(|c| c.abs() < 1e-12));
    }
}
