//! Finitely supported measures on quantization grids.
//!
//! Support points are indices into a [`Grid`]; coordinates are looked up only
//! when a quantity needs them (moments, costs, mean-field arguments).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantize::Grid;

/// Masses within this distance of one are treated as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Larger drifts than this are rejected instead of renormalized.
pub const RENORMALIZATION_LIMIT: f64 = 1e-9;

fn check_weights(weights: &[f64]) -> Result<f64> {
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::Measure(format!("weight {w} is negative or not finite")));
    }
    Ok(weights.iter().sum())
}

/// Rescales to unit mass when the drift is small and rejects it otherwise.
fn renormalize(weights: &mut [f64], mass: f64) -> Result<()> {
    let drift = (mass - 1.0).abs();
    if drift > RENORMALIZATION_LIMIT {
        return Err(Error::Measure(format!("total mass {mass} is not one")));
    }
    if drift > NORMALIZATION_TOL {
        weights.iter_mut().for_each(|w| *w /= mass);
    }
    Ok(())
}

/// A measure on the index set `0..len` of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "SparseMeasure", try_from = "SparseMeasure")]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
    normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct SparseMeasure {
    len: usize,
    normalized: bool,
    support: Vec<usize>,
    weights: Vec<f64>,
}

impl From<DiscreteMeasure> for SparseMeasure {
    fn from(m: DiscreteMeasure) -> Self {
        let (support, weights) = m
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| (i, *w))
            .unzip();
        SparseMeasure {
            len: m.weights.len(),
            normalized: m.normalized,
            support,
            weights,
        }
    }
}

impl TryFrom<SparseMeasure> for DiscreteMeasure {
    type Error = Error;
    fn try_from(s: SparseMeasure) -> Result<Self> {
        if s.support.len() != s.weights.len() {
            return Err(Error::Measure("support and weights differ in length".into()));
        }
        let mut dense = vec![0.0; s.len];
        for (&i, &w) in s.support.iter().zip(&s.weights) {
            *dense.get_mut(i).ok_or(Error::Index { index: i, len: s.len })? += w;
        }
        if s.normalized {
            DiscreteMeasure::probability(dense)
        } else {
            DiscreteMeasure::unnormalized(dense)
        }
    }
}

impl DiscreteMeasure {
    /// A probability measure; small normalization drift is corrected.
    pub fn probability(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Measure("empty support".into()));
        }
        let mass = check_weights(&weights)?;
        renormalize(&mut weights, mass)?;
        Ok(DiscreteMeasure {
            weights,
            normalized: true,
        })
    }

    /// A finite measure of arbitrary mass, such as an unnormalized filter.
    pub fn unnormalized(weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        Ok(DiscreteMeasure {
            weights,
            normalized: false,
        })
    }

    pub fn dirac(len: usize, index: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::Index { index, len });
        }
        let mut w = vec![0.0; len];
        w[index] = 1.0;
        Self::probability(w)
    }

    pub fn uniform(len: usize) -> Result<Self> {
        Self::probability(vec![1.0 / len as f64; len])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.weights.get(index).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Divides by the total mass. Fails on the zero measure.
    pub fn normalize(&self) -> Result<Self> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::Measure("cannot normalize a zero measure".into()));
        }
        Self::probability(self.weights.iter().map(|w| w / mass).collect())
    }

    /// Mean of the grid coordinates under this (normalized) measure.
    pub fn mean(&self, grid: &Grid) -> Result<Vec<f64>> {
        if grid.len() != self.len() {
            return Err(Error::config(format!(
                "measure on {} points but grid has {}",
                self.len(),
                grid.len()
            )));
        }
        let mut mean = vec![0.0; grid.dim()];
        for (i, &w) in self.weights.iter().enumerate() {
            for (m, c) in mean.iter_mut().zip(grid.center(i)) {
                *m += w * c;
            }
        }
        Ok(mean)
    }
}

/// Probability on pairs of hidden and observation grid indices, stored as a
/// dense row-major `rows x cols` matrix with `rows` indexing the hidden grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "SparseJoint", try_from = "SparseJoint")]
pub struct JointMeasure {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SparseJoint {
    rows: usize,
    cols: usize,
    support: Vec<[usize; 2]>,
    weights: Vec<f64>,
}

impl From<JointMeasure> for SparseJoint {
    fn from(m: JointMeasure) -> Self {
        let mut support = Vec::new();
        let mut weights = Vec::new();
        for (k, &w) in m.weights.iter().enumerate() {
            if w > 0.0 {
                support.push([k / m.cols, k % m.cols]);
                weights.push(w);
            }
        }
        SparseJoint {
            rows: m.rows,
            cols: m.cols,
            support,
            weights,
        }
    }
}

impl TryFrom<SparseJoint> for JointMeasure {
    type Error = Error;
    fn try_from(s: SparseJoint) -> Result<Self> {
        if s.support.len() != s.weights.len() {
            return Err(Error::Measure("support and weights differ in length".into()));
        }
        let mut dense = vec![0.0; s.rows * s.cols];
        for (&[i, j], &w) in s.support.iter().zip(&s.weights) {
            if i >= s.rows || j >= s.cols {
                return Err(Error::Index {
                    index: i.max(j),
                    len: s.rows.max(s.cols),
                });
            }
            dense[i * s.cols + j] += w;
        }
        JointMeasure::new(s.rows, s.cols, dense)
    }
}

impl JointMeasure {
    pub fn new(rows: usize, cols: usize, mut weights: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || weights.len() != rows * cols {
            return Err(Error::Measure(format!(
                "{} weights do not fill a {rows}x{cols} matrix",
                weights.len()
            )));
        }
        let mass = check_weights(&weights)?;
        renormalize(&mut weights, mass)?;
        Ok(JointMeasure { rows, cols, weights })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Measure("ragged weight matrix".into()));
        }
        Self::new(r, c, rows.concat())
    }

    /// Independent coupling of two probability vectors.
    pub fn product(hidden: &DiscreteMeasure, obs: &DiscreteMeasure) -> Result<Self> {
        let w = hidden
            .weights()
            .iter()
            .flat_map(|p| obs.weights().iter().map(move |q| p * q))
            .collect();
        Self::new(hidden.len(), obs.len(), w)
    }

    pub fn dirac(rows: usize, cols: usize, i: usize, j: usize) -> Result<Self> {
        if i >= rows || j >= cols {
            return Err(Error::Index {
                index: i.max(j),
                len: rows.max(cols),
            });
        }
        let mut w = vec![0.0; rows * cols];
        w[i * cols + j] = 1.0;
        Self::new(rows, cols, w)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// Law of the hidden component.
    pub fn first_marginal(&self) -> DiscreteMeasure {
        let w = (0..self.rows)
            .map(|i| self.weights[i * self.cols..(i + 1) * self.cols].iter().sum())
            .collect();
        DiscreteMeasure {
            weights: w,
            normalized: true,
        }
    }

    /// Law of the observation component.
    pub fn second_marginal(&self) -> DiscreteMeasure {
        let mut w = vec![0.0; self.cols];
        for (k, &p) in self.weights.iter().enumerate() {
            w[k % self.cols] += p;
        }
        DiscreteMeasure {
            weights: w,
            normalized: true,
        }
    }

    /// Squared Frobenius distance between weight matrices.
    pub fn frobenius_sq(&self, other: &JointMeasure) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn max_abs_diff(&self, other: &JointMeasure) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A path of `(hidden index, observation index)` pairs from time 0.
pub type IndexPath = Vec<(usize, usize)>;

/// Law of the joint index path up to time `horizon`, stored sparsely.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathMeasure {
    rows: usize,
    cols: usize,
    horizon: usize,
    #[serde(with = "path_entries")]
    entries: BTreeMap<IndexPath, f64>,
}

mod path_entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<IndexPath, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<(&IndexPath, &f64)> = m.iter().collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<IndexPath, f64>, D::Error> {
        let v: Vec<(IndexPath, f64)> = Vec::deserialize(d)?;
        Ok(v.into_iter().collect())
    }
}

impl PathMeasure {
    pub fn from_initial(m0: &JointMeasure) -> Self {
        let entries = m0
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(k, &w)| (vec![(k / m0.cols, k % m0.cols)], w))
            .collect();
        PathMeasure {
            rows: m0.rows,
            cols: m0.cols,
            horizon: 0,
            entries,
        }
    }

    /// Builds a path measure from explicit entries, all of length `horizon + 1`.
    pub fn new(rows: usize, cols: usize, entries: BTreeMap<IndexPath, f64>) -> Result<Self> {
        let horizon = entries
            .keys()
            .next()
            .map(|p| p.len())
            .filter(|&l| l > 0)
            .ok_or_else(|| Error::Measure("empty path measure".into()))?
            - 1;
        for (p, &w) in &entries {
            if p.len() != horizon + 1 || p.iter().any(|&(i, j)| i >= rows || j >= cols) {
                return Err(Error::Measure("path of wrong length or out of range".into()));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Measure(format!("path weight {w} is invalid")));
            }
        }
        let mass: f64 = entries.values().sum();
        if (mass - 1.0).abs() > RENORMALIZATION_LIMIT {
            return Err(Error::Measure(format!("path mass {mass} is not one")));
        }
        Ok(PathMeasure {
            rows,
            cols,
            horizon,
            entries,
        })
    }

    pub(crate) fn from_parts(rows: usize, cols: usize, horizon: usize, entries: BTreeMap<IndexPath, f64>) -> Self {
        PathMeasure {
            rows,
            cols,
            horizon,
            entries,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&IndexPath, f64)> {
        self.entries.iter().map(|(p, w)| (p, *w))
    }

    /// Joint law of the pair at time `time`.
    pub fn marginal(&self, time: usize) -> Result<JointMeasure> {
        if time > self.horizon {
            return Err(Error::Index {
                index: time,
                len: self.horizon + 1,
            });
        }
        let mut w = vec![0.0; self.rows * self.cols];
        for (p, &m) in &self.entries {
            let (i, j) = p[time];
            w[i * self.cols + j] += m;
        }
        JointMeasure::new(self.rows, self.cols, w)
    }
}

/// First and second moments of the stacked vector `(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentPair {
    pub mean: DVector<f64>,
    pub quad: DMatrix<f64>,
}

impl MomentPair {
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.quad - &self.mean * self.mean.transpose()
    }

    /// Moments of independent Gaussian `x` and `y` with identity covariance.
    pub fn independent_standard(mean_x: &[f64], mean_y: &[f64]) -> Self {
        let mean = DVector::from_iterator(mean_x.len() + mean_y.len(), mean_x.iter().chain(mean_y).copied());
        let n = mean.len();
        let quad = DMatrix::identity(n, n) + &mean * mean.transpose();
        MomentPair { mean, quad }
    }
}

/// Moments of a joint measure read through the hidden and observation grids.
pub fn moments(m: &JointMeasure, hidden: &Grid, obs: &Grid) -> Result<MomentPair> {
    if hidden.len() != m.rows() || obs.len() != m.cols() {
        return Err(Error::config("joint measure support does not match the grids"));
    }
    let dx = hidden.dim();
    let n = dx + obs.dim();
    let mut mean = DVector::zeros(n);
    let mut quad = DMatrix::zeros(n, n);
    let mut z = DVector::zeros(n);
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let w = m.get(i, j);
            if w == 0.0 {
                continue;
            }
            for (k, v) in hidden.center(i).iter().chain(obs.center(j)).enumerate() {
                z[k] = *v;
            }
            mean.axpy(w, &z, 1.0);
            quad.ger(w, &z, &z, 1.0);
        }
    }
    Ok(MomentPair { mean, quad })
}
