//! Grids, Voronoi projection, Lloyd's algorithm, Monte Carlo kernels and the
//! codebook of joint marginals.

mod codebook;
mod kernels;
mod lloyd;
mod quadrature;

pub use codebook::{codebook_build, codebook_project, CodebookOptions, CodebookReport, MeasureCodebook, DEDUP_TOL};
pub use kernels::{estimate_kernels, FnKernels, KernelSource, MonteCarloKernels};
pub use lloyd::{lloyd, lloyd_gaussian, standard_gaussian_target, LloydOptions, LloydResult};
pub use quadrature::{gaussian_midpoint_rule, standard_gaussian_rule, WeightedSample};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distinct points of `R^dim`, the centers of a Voronoi quantizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "GridRepr", try_from = "GridRepr")]
pub struct Grid {
    dim: usize,
    centers: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    dim: usize,
    centers: Vec<Vec<f64>>,
}

impl From<Grid> for GridRepr {
    fn from(g: Grid) -> Self {
        GridRepr {
            dim: g.dim,
            centers: g.centers.chunks(g.dim).map(<[f64]>::to_vec).collect(),
        }
    }
}

impl TryFrom<GridRepr> for Grid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        let g = Grid::new(r.centers)?;
        if g.dim != r.dim {
            return Err(Error::config("grid dimension does not match its centers"));
        }
        Ok(g)
    }
}

impl Grid {
    pub fn new(centers: Vec<Vec<f64>>) -> Result<Self> {
        let dim = centers.first().map_or(0, Vec::len);
        if dim == 0 || centers.iter().any(|c| c.len() != dim) {
            return Err(Error::config(
                "grid needs at least one center of a common positive dimension",
            ));
        }
        if centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("grid center is not finite"));
        }
        for (a, ca) in centers.iter().enumerate() {
            if centers[..a].iter().any(|cb| cb == ca) {
                return Err(Error::config(format!("grid center {a} is duplicated")));
            }
        }
        Ok(Grid {
            dim,
            centers: centers.concat(),
        })
    }

    /// One-dimensional grid from scalar centers.
    pub fn scalar(centers: &[f64]) -> Result<Self> {
        Self::new(centers.iter().map(|&c| vec![c]).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centers(&self) -> impl Iterator<Item = &[f64]> {
        self.centers.chunks(self.dim)
    }

    /// Index of the nearest center; ties go to the smallest index.
    pub fn project(&self, x: &[f64]) -> usize {
        debug_assert_eq!(x.len(), self.dim);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centers().enumerate() {
            let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Maps each center `c` to `shift + scale * c`, coordinatewise.
    pub fn affine(&self, shift: &[f64], scale: &[f64]) -> Result<Self> {
        if shift.len() != self.dim || scale.len() != self.dim {
            return Err(Error::config("affine map dimension mismatch"));
        }
        Self::new(
            self.centers()
                .map(|c| (0..self.dim).map(|k| shift[k] + scale[k] * c[k]).collect())
                .collect(),
        )
    }
}

/// Hidden and observation grids, either fixed or one per time step.
///
/// All grids of a kind share the same size so that weight matrices of joint
/// marginals keep a fixed shape across time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    hidden: Vec<Grid>,
    obs: Vec<Grid>,
}

impl Grids {
    pub fn fixed(hidden: Grid, obs: Grid) -> Self {
        Grids {
            hidden: vec![hidden],
            obs: vec![obs],
        }
    }

    /// Time-indexed grids for times `0..=horizon`.
    pub fn per_time(hidden: Vec<Grid>, obs: Vec<Grid>) -> Result<Self> {
        if hidden.is_empty() || hidden.len() != obs.len() {
            return Err(Error::config("per-time grids must cover the same times"));
        }
        let (nh, no) = (hidden[0].len(), obs[0].len());
        if hidden.iter().any(|g| g.len() != nh || g.dim() != hidden[0].dim())
            || obs.iter().any(|g| g.len() != no || g.dim() != obs[0].dim())
        {
            return Err(Error::config("per-time grids must share size and dimension"));
        }
        Ok(Grids { hidden, obs })
    }

    pub fn hidden(&self, time: usize) -> &Grid {
        &self.hidden[time.min(self.hidden.len() - 1)]
    }

    pub fn obs(&self, time: usize) -> &Grid {
        &self.obs[time.min(self.obs.len() - 1)]
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden[0].len()
    }

    pub fn n_obs(&self) -> usize {
        self.obs[0].len()
    }

    pub fn is_fixed(&self) -> bool {
        self.hidden.len() == 1
    }

    /// Checks that time-indexed grids reach `horizon`.
    pub fn check_horizon(&self, horizon: usize) -> Result<()> {
        if !self.is_fixed() && self.hidden.len() <= horizon {
            return Err(Error::config(format!(
                "grids cover {} times but the horizon is {horizon}",
                self.hidden.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_on_symmetric_pair() {
        let g = Grid::scalar(&[-1.0, 1.0]).unwrap();
        assert_eq!(g.project(&[0.0]), 0);
        assert_eq!(g.project(&[0.2]), 1);
        assert_eq!(g.project(&[-3.0]), 0);
    }

    #[test]
    fn duplicate_centers_rejected() {
        assert!(Grid::scalar(&[0.0, 1.0, 0.0]).is_err());
        assert!(Grid::new(vec![]).is_err());
    }
}
