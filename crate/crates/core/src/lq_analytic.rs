//! Closed-form solution of the linear-quadratic model.
//!
//! The value is `W_n(mu) = <mu>(Lambda_n) + mean(mu)' Theta_n mean(mu) + chi_n`
//! where `<mu>(M)` is the expected quadratic form of the stacked vector
//! `(x, y)`. The recursion below is exact when every `B_n` vanishes. With
//! `B_n != 0` the optimal control depends on the posterior mean of the hidden
//! state and the value picks up a term that is not a function of the first
//! two moments; it is omitted, so `Lambda`, `Theta` and `chi` then describe
//! the best control that ignores the fluctuation of the posterior mean.

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::filter::gaussian_posterior_mean;
use crate::linalg::{checked_inverse, matrix_to_rows, symmetrize};
use crate::measures::MomentPair;
use crate::model::LqParams;

/// Coefficients of one backward step `n -> n + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiStep {
    /// `[I; J]' Lambda_{n+1} [I; J]`.
    pub coupling: DMatrix<f64>,
    /// Curvature in the fluctuation of the control, `D' coupling D + R`.
    pub hessian: DMatrix<f64>,
    /// Curvature in the mean control, `hessian + N`.
    pub mean_hessian: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub s_tilde: DMatrix<f64>,
    pub s_hat: DMatrix<f64>,
    /// `-hessian^{-1}`.
    pub gain: DMatrix<f64>,
    /// `D' coupling B`, weight of the posterior mean in the control.
    pub xi: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiSolution {
    pub params: LqParams,
    /// Indexed by time `0..=horizon`.
    pub lambda: Vec<DMatrix<f64>>,
    pub theta: Vec<DMatrix<f64>>,
    pub chi: Vec<f64>,
    /// Indexed by time `0..horizon`.
    pub steps: Vec<RiccatiStep>,
}

fn stack_obs(j: &DMatrix<f64>) -> DMatrix<f64> {
    let d = j.ncols();
    let mut m = DMatrix::zeros(2 * d, d);
    m.view_mut((0, 0), (d, d)).copy_from(&DMatrix::identity(d, d));
    m.view_mut((d, 0), (d, d)).copy_from(j);
    m
}

fn obs_noise_embedding(d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * d, d);
    m.view_mut((d, 0), (d, d)).copy_from(&DMatrix::identity(d, d));
    m
}

fn pad_cols(b: &DMatrix<f64>) -> DMatrix<f64> {
    let d = b.nrows();
    let mut m = DMatrix::zeros(d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(b);
    m
}

fn pad_block(q: &DMatrix<f64>) -> DMatrix<f64> {
    let d = q.nrows();
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(q);
    m
}

/// Backward recursion for `Lambda`, `Theta`, `chi` and the feedback terms.
pub fn riccati_backward(params: &LqParams) -> Result<RiccatiSolution> {
    params.validate()?;
    let (d, t) = (params.dim, params.horizon);
    let noise = obs_noise_embedding(d);
    let mut lambda = vec![DMatrix::zeros(2 * d, 2 * d); t + 1];
    let mut theta = lambda.clone();
    let mut chi = vec![0.0; t + 1];
    lambda[t] = pad_block(&params.q[t]);
    theta[t] = pad_block(&params.q_bar[t]);
    let mut steps = Vec::with_capacity(t);
    for n in (0..t).rev() {
        let jj = stack_obs(&params.j[n]);
        let coupling = symmetrize(&(jj.transpose() * &lambda[n + 1] * &jj));
        let mean_coupling = symmetrize(&(jj.transpose() * &theta[n + 1] * &jj));
        let dm = &params.d[n];
        let b = pad_cols(&params.b[n]);
        let bb = pad_cols(&params.b_bar[n]);
        let bs = &b + &bb;
        let hessian = symmetrize(&(dm.transpose() * &coupling * dm + &params.r[n]));
        let nm = symmetrize(&(dm.transpose() * &mean_coupling * dm));
        let mean_hessian = &hessian + &nm;
        let k = symmetrize(
            &(pad_block(&params.q_bar[n])
                + bs.transpose() * &mean_coupling * &bs
                + bb.transpose() * &coupling * &bb
                + b.transpose() * &coupling * &bb
                + bb.transpose() * &coupling * &b),
        );
        let s = bs.transpose() * &mean_coupling * dm + bb.transpose() * &coupling * dm;
        let s_tilde = &s + b.transpose() * &coupling * dm;
        let gain = -checked_inverse(&hessian, "control Hessian", n)?;
        let mean_inv = checked_inverse(&mean_hessian, "mean-control Hessian", n)?;
        let xi = dm.transpose() * &coupling * &params.b[n];
        let s_hat = &s - &s_tilde * &mean_inv * &nm;
        lambda[n] = symmetrize(&(pad_block(&params.q[n]) + b.transpose() * &coupling * &b));
        theta[n] = symmetrize(&(&k - &s_tilde * &mean_inv * s_tilde.transpose()));
        chi[n] = coupling.trace() + (noise.transpose() * &lambda[n + 1] * &noise).trace() + chi[n + 1];
        steps.push(RiccatiStep {
            coupling,
            hessian,
            mean_hessian,
            k,
            n: nm,
            s,
            s_tilde,
            s_hat,
            gain,
            xi,
        });
    }
    steps.reverse();
    Ok(RiccatiSolution {
        params: params.clone(),
        lambda,
        theta,
        chi,
        steps,
    })
}

impl RiccatiSolution {
    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    /// `W_n` evaluated at a law with the given moments of `(x, y)`.
    pub fn value_at(&self, n: usize, m: &MomentPair) -> Result<f64> {
        let l = self.lambda.get(n).ok_or(Error::Index {
            index: n,
            len: self.lambda.len(),
        })?;
        if m.mean.len() != l.nrows() {
            return Err(Error::config("moment dimension mismatch"));
        }
        Ok((l * &m.quad).trace() + m.mean.dot(&(&self.theta[n] * &m.mean)) + self.chi[n])
    }

    pub fn step(&self, n: usize) -> Result<&RiccatiStep> {
        self.steps.get(n).ok_or(Error::Index {
            index: n,
            len: self.steps.len(),
        })
    }

    /// JSON form of every matrix, keyed by time.
    pub fn to_json(&self) -> Value {
        let values: Vec<Value> = (0..=self.horizon())
            .map(|n| {
                json!({
                    "time": n,
                    "lambda": matrix_to_rows(&self.lambda[n]),
                    "theta": matrix_to_rows(&self.theta[n]),
                    "chi": self.chi[n],
                })
            })
            .collect();
        let steps: Vec<Value> = self
            .steps
            .iter()
            .enumerate()
            .map(|(n, s)| {
                json!({
                    "time": n,
                    "coupling": matrix_to_rows(&s.coupling),
                    "hessian": matrix_to_rows(&s.hessian),
                    "mean_hessian": matrix_to_rows(&s.mean_hessian),
                    "k": matrix_to_rows(&s.k),
                    "n": matrix_to_rows(&s.n),
                    "s": matrix_to_rows(&s.s),
                    "s_tilde": matrix_to_rows(&s.s_tilde),
                    "s_hat": matrix_to_rows(&s.s_hat),
                    "gain": matrix_to_rows(&s.gain),
                    "xi": matrix_to_rows(&s.xi),
                })
            })
            .collect();
        json!({ "dim": self.params.dim, "horizon": self.horizon(), "values": values, "steps": steps })
    }
}

/// First-order condition residual `N abar + S' mu + Xi phi(y) + A a(y)` in the
/// max norm over the supplied `(phi(y), a(y))` pairs.
pub fn foc_residual(
    sol: &RiccatiSolution,
    n: usize,
    mean: &DVector<f64>,
    mean_control: &DVector<f64>,
    samples: &[(DVector<f64>, DVector<f64>)],
) -> Result<f64> {
    let s = sol.step(n)?;
    let base = &s.n * mean_control + s.s.transpose() * mean;
    Ok(samples
        .iter()
        .map(|(phi, a)| (&base + &s.xi * phi + &s.hessian * a).amax())
        .fold(0.0, f64::max))
}

/// Scale against which [`foc_residual`] is compared.
pub fn foc_scale(sol: &RiccatiSolution, n: usize) -> Result<f64> {
    let s = sol.step(n)?;
    Ok(1.0 + s.n.amax() + s.s.amax() + s.xi.amax() + s.hessian.amax())
}

/// Optimal control `G (Xi phi + S_hat' mean)` at time `n`.
pub fn optimal_feedback(
    sol: &RiccatiSolution,
    n: usize,
    phi: &DVector<f64>,
    mean: &DVector<f64>,
) -> Result<DVector<f64>> {
    let s = sol.step(n)?;
    Ok(&s.gain * (&s.xi * phi + s.s_hat.transpose() * mean))
}

/// Posterior mean of the hidden state used by the feedback at time `n` when
/// the hidden marginal is Gaussian with the given moments. At time 0 the
/// observation is independent of the state.
pub fn feedback_posterior(
    sol: &RiccatiSolution,
    n: usize,
    mean_x: &DVector<f64>,
    cov_x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    if n == 0 {
        return Ok(mean_x.clone());
    }
    gaussian_posterior_mean(mean_x, cov_x, &sol.params.j[n - 1], y)
}

/// `W_0` at the initial law.
pub fn w0_value(sol: &RiccatiSolution, m0: &MomentPair) -> Result<f64> {
    sol.value_at(0, m0)
}

/// `W_0` at the model's own Gaussian initial law.
pub fn w0_default(sol: &RiccatiSolution) -> Result<f64> {
    let m0 = MomentPair::independent_standard(&sol.params.initial_mean_x, &sol.params.initial_mean_y);
    w0_value(sol, &m0)
}
