//! Discrete Kallianpur-Streibel filter and Gaussian posterior means.
//!
//! The filter tracks the conditional law of the hidden cell given the
//! observed cells. The hidden transition is driven by the unconditional
//! hidden marginal, which callers obtain from [`hidden_marginal_flow`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use crate::dp::hidden_marginal_flow;
use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, JointMeasure};
use crate::model::HiddenLaw;
use crate::quantize::KernelSource;

/// Linear-domain masses below this are reported as a collapse.
pub const COLLAPSE_MASS: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterDomain {
    Linear,
    Log,
}

/// Normalized filter plus the logarithm of the unnormalized mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub time: usize,
    pub last_obs: usize,
    pub posterior: DiscreteMeasure,
    pub log_mass: f64,
}

impl FilterState {
    /// The unnormalized filter, i.e. the joint probability of the hidden
    /// cell and the observed history.
    pub fn unnormalized(&self) -> Result<DiscreteMeasure> {
        let mass = self.log_mass.exp();
        DiscreteMeasure::unnormalized(self.posterior.weights().iter().map(|w| w * mass).collect())
    }
}

/// Conditions the initial joint law on the first observed cell.
pub fn ks_init(m0: &JointMeasure, y0: usize) -> Result<FilterState> {
    if y0 >= m0.cols() {
        return Err(Error::Index {
            index: y0,
            len: m0.cols(),
        });
    }
    let column: Vec<f64> = (0..m0.rows()).map(|x| m0.get(x, y0)).collect();
    let mass: f64 = column.iter().sum();
    if mass <= 0.0 {
        return Err(Error::UnreachableObservation { time: 0, cell: y0 });
    }
    Ok(FilterState {
        time: 0,
        last_obs: y0,
        posterior: DiscreteMeasure::probability(column.iter().map(|w| w / mass).collect())?,
        log_mass: mass.ln(),
    })
}

/// One filter step from time `n` to `n + 1` under control index `control`.
///
/// `hidden_law` is the unconditional hidden marginal at time `n`.
pub fn ks_update(
    state: &FilterState,
    kernels: &dyn KernelSource,
    hidden_law: &HiddenLaw,
    control: usize,
    y_next: usize,
    domain: FilterDomain,
) -> Result<FilterState> {
    let n = state.time;
    let nh = state.posterior.len();
    let mut u = vec![0.0; nh];
    for (x, &w) in state.posterior.weights().iter().enumerate() {
        if w > 0.0 {
            let row = kernels.hidden_row(n, x, control, hidden_law)?;
            u.iter_mut().zip(row.iter()).for_each(|(t, p)| *t += w * p);
        }
    }
    for (k, t) in u.iter_mut().enumerate() {
        if *t > 0.0 {
            let h = kernels.obs_row(n, k, state.last_obs, control)?;
            *t *= *h.get(y_next).ok_or(Error::Index {
                index: y_next,
                len: h.len(),
            })?;
        }
    }
    let s: f64 = u.iter().sum();
    if s <= 0.0 {
        return Err(Error::UnreachableObservation {
            time: n + 1,
            cell: y_next,
        });
    }
    let log_mass = state.log_mass + s.ln();
    if domain == FilterDomain::Linear {
        let mass = state.log_mass.exp() * s;
        if mass < COLLAPSE_MASS {
            return Err(Error::FilterCollapse { time: n + 1, mass });
        }
    }
    Ok(FilterState {
        time: n + 1,
        last_obs: y_next,
        posterior: DiscreteMeasure::probability(u.iter().map(|v| v / s).collect())?,
        log_mass,
    })
}

/// Posterior mean of `X` given `y = J X + eta`, `eta ~ N(0, I)`, with `X`
/// distributed as the finitely supported `prior`.
pub fn phi(prior: &HiddenLaw, j: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    if j.ncols() != prior.dim() || j.nrows() != y.len() {
        return Err(Error::config("observation matrix shape mismatch"));
    }
    let y = DVector::from_column_slice(y);
    let support: Vec<(DVector<f64>, f64)> = prior
        .points()
        .zip(prior.weights())
        .filter(|(_, w)| **w > 0.0)
        .map(|(x, &w)| (DVector::from_column_slice(x), w))
        .collect();
    if support.is_empty() {
        return Err(Error::Measure("prior has no mass".into()));
    }
    let exponents: Vec<f64> = support
        .iter()
        .map(|(x, _)| -0.5 * (&y - j * x).norm_squared())
        .collect();
    let shift = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut num = DVector::zeros(prior.dim());
    let mut den = 0.0;
    for ((x, w), e) in support.iter().zip(&exponents) {
        let k = w * (e - shift).exp();
        num.axpy(k, x, 1.0);
        den += k;
    }
    Ok((num / den).as_slice().to_vec())
}

/// Posterior mean for a Gaussian prior `N(mean, cov)`:
/// `mean + cov J' (J cov J' + I)^{-1} (y - J mean)`.
pub fn gaussian_posterior_mean(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    j: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let s = j * cov * j.transpose() + DMatrix::identity(j.nrows(), j.nrows());
    let innovation = y - j * mean;
    let gain = s
        .cholesky()
        .ok_or_else(|| Error::config("innovation covariance is not positive definite"))?
        .solve(&innovation);
    Ok(mean + cov * j.transpose() * gain)
}
