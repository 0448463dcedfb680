use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Dims, HiddenLaw, ModelSpec};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, min_eigenvalue, vector, MAX_CONDITION};
use crate::quantize::standard_gaussian_rule;

/// Coefficients of the linear-quadratic model
///
/// `x' = B_k x + Bbar_k E[x] + D_k a + eps`, `y' = J_{k+1} x' + eta`,
/// running cost `x'Q_k x + E[x]'Qbar_k E[x] + a'R_k a`, terminal cost the same
/// without the control term, Gaussian noises with identity covariance and
/// independent Gaussian initial state and observation with identity covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct LqParams {
    pub dim: usize,
    pub horizon: usize,
    /// Indexed by `k = 0..horizon`.
    pub b: Vec<DMatrix<f64>>,
    pub b_bar: Vec<DMatrix<f64>>,
    pub d: Vec<DMatrix<f64>>,
    /// `j[k]` is the observation matrix applied at time `k + 1`.
    pub j: Vec<DMatrix<f64>>,
    /// Indexed by `k = 0..=horizon`.
    pub q: Vec<DMatrix<f64>>,
    pub q_bar: Vec<DMatrix<f64>>,
    /// Indexed by `k = 0..horizon`.
    pub r: Vec<DMatrix<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub initial_mean_x: Vec<f64>,
    pub initial_mean_y: Vec<f64>,
}

impl LqParams {
    /// Time-invariant coefficients with a centered initial law.
    pub fn time_invariant(
        horizon: usize,
        b: DMatrix<f64>,
        b_bar: DMatrix<f64>,
        d: DMatrix<f64>,
        j: DMatrix<f64>,
        q: DMatrix<f64>,
        q_bar: DMatrix<f64>,
        r: DMatrix<f64>,
        controls: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let dim = b.nrows();
        let p = LqParams {
            dim,
            horizon,
            b: vec![b; horizon],
            b_bar: vec![b_bar; horizon],
            d: vec![d; horizon],
            j: vec![j; horizon],
            q: vec![q.clone(); horizon + 1],
            q_bar: vec![q_bar.clone(); horizon + 1],
            r: vec![r; horizon],
            controls,
            initial_mean_x: vec![0.0; dim],
            initial_mean_y: vec![0.0; dim],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_initial_means(mut self, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        self.initial_mean_x = x;
        self.initial_mean_y = y;
        self.validate()?;
        Ok(self)
    }

    /// Checks shapes and admissibility: symmetric nonnegative `Q` and
    /// `Q + Qbar`, symmetric positive definite `R`, invertible `J` and `D`.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        let t = self.horizon;
        let sq = |m: &DMatrix<f64>| m.nrows() == d && m.ncols() == d;
        let lens = [self.b.len(), self.b_bar.len(), self.d.len(), self.j.len(), self.r.len()];
        if d == 0 || lens.iter().any(|&l| l != t) || self.q.len() != t + 1 || self.q_bar.len() != t + 1 {
            return Err(Error::config("LQ coefficient sequences have the wrong length"));
        }
        let all = self.b.iter().chain(&self.b_bar).chain(&self.d).chain(&self.j);
        if !all.chain(&self.q).chain(&self.q_bar).chain(&self.r).all(sq) {
            return Err(Error::config(format!("LQ matrices must be {d}x{d}")));
        }
        let sym = |m: &DMatrix<f64>| (m - m.transpose()).abs().max() <= 1e-12 * (1.0 + m.abs().max());
        for k in 0..=t {
            let qq = &self.q[k] + &self.q_bar[k];
            if !sym(&self.q[k]) || !sym(&self.q_bar[k]) {
                return Err(Error::config(format!("Q or Qbar at time {k} is not symmetric")));
            }
            if min_eigenvalue(&self.q[k]) < -1e-12 || min_eigenvalue(&qq) < -1e-12 {
                return Err(Error::config(format!("Q or Q + Qbar at time {k} is not nonnegative")));
            }
        }
        for k in 0..t {
            if !sym(&self.r[k]) || min_eigenvalue(&self.r[k]) <= 0.0 {
                return Err(Error::config(format!("R at time {k} is not positive definite")));
            }
            for (name, m) in [("J", &self.j[k]), ("D", &self.d[k])] {
                if condition_number(m) > MAX_CONDITION {
                    return Err(Error::config(format!("{name} at time {k} is not invertible")));
                }
            }
        }
        if self.controls.is_empty() || self.controls.iter().any(|c| c.len() != d) {
            return Err(Error::config(
                "LQ controls must be nonempty vectors of the state dimension",
            ));
        }
        if self.initial_mean_x.len() != d || self.initial_mean_y.len() != d {
            return Err(Error::config("initial means have the wrong dimension"));
        }
        Ok(())
    }

    pub fn b_is_zero(&self) -> bool {
        self.b.iter().all(|m| m.iter().all(|v| *v == 0.0))
    }

    pub fn b_bar_is_zero(&self) -> bool {
        self.b_bar.iter().all(|m| m.iter().all(|v| *v == 0.0))
    }
}

fn quad(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

fn gaussian(rng: &mut dyn rand::RngCore, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// The linear-quadratic model as a [`ModelSpec`].
pub fn lq_model(params: &LqParams) -> Result<ModelSpec> {
    params.validate()?;
    let d = params.dim;
    let p = Arc::new(params.clone());
    let dims = Dims {
        hidden: d,
        obs: d,
        control: d,
    };
    let hidden = {
        let p = p.clone();
        Arc::new(move |n: usize, x: &[f64], law: &HiddenLaw, a: &[f64], eps: &[f64]| {
            let v = &p.b[n] * vector(x) + &p.b_bar[n] * vector(law.mean()) + &p.d[n] * vector(a) + vector(eps);
            v.as_slice().to_vec()
        })
    };
    let obs = {
        let p = p.clone();
        Arc::new(move |n: usize, x1: &[f64], _y: &[f64], _a: &[f64], eta: &[f64]| {
            (&p.j[n] * vector(x1) + vector(eta)).as_slice().to_vec()
        })
    };
    let density = {
        let p = p.clone();
        let norm = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
        Arc::new(move |n: usize, x1: &[f64], _y: &[f64], _a: &[f64], y1: &[f64]| {
            let r = vector(y1) - &p.j[n] * vector(x1);
            norm * (-0.5 * r.norm_squared()).exp()
        })
    };
    let running = {
        let p = p.clone();
        Arc::new(move |n: usize, x: &[f64], law: &HiddenLaw, a: &[f64]| {
            quad(&p.q[n], &vector(x)) + quad(&p.q_bar[n], &vector(law.mean())) + quad(&p.r[n], &vector(a))
        })
    };
    let terminal = {
        let p = p.clone();
        let t = p.horizon;
        Arc::new(move |x: &[f64], law: &HiddenLaw| quad(&p.q[t], &vector(x)) + quad(&p.q_bar[t], &vector(law.mean())))
    };
    let initial = {
        let p = p.clone();
        Arc::new(move |rng: &mut dyn rand::RngCore| {
            let mut x = gaussian(rng, d);
            let mut y = gaussian(rng, d);
            x.iter_mut().zip(&p.initial_mean_x).for_each(|(v, m)| *v += m);
            y.iter_mut().zip(&p.initial_mean_y).for_each(|(v, m)| *v += m);
            (x, y)
        })
    };
    let mf_dependent = !params.b_bar_is_zero();
    let mut builder = ModelSpec::builder(dims, params.horizon, params.controls.clone())
        .hidden_step(hidden)
        .obs_step(obs)
        .obs_density(density)
        .running_cost(running)
        .terminal_cost(terminal)
        .noises(
            Arc::new(move |rng: &mut dyn rand::RngCore| gaussian(rng, d)),
            Arc::new(move |rng: &mut dyn rand::RngCore| gaussian(rng, d)),
        )
        .initial_sampler(initial)
        .mean_field_key(Arc::new(move |law: &HiddenLaw| {
            if mf_dependent {
                law.mean().iter().map(|m| m.to_bits()).collect()
            } else {
                Vec::new()
            }
        }));
    if d <= 2 {
        let rule = standard_gaussian_rule(d);
        builder = builder.initial_rule(
            rule.shifted(&params.initial_mean_x),
            rule.shifted(&params.initial_mean_y),
        );
    }
    builder.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benchmark() -> LqParams {
        let m = |v: [f64; 4]| DMatrix::from_row_slice(2, 2, &v);
        LqParams::time_invariant(
            3,
            m([0.0; 4]),
            m([0.0; 4]),
            m([1.0, 1.0, 0.0, 1.0]),
            m([1.0, 1.0, 0.0, 1.0]),
            m([1.0; 4]),
            m([1.0; 4]),
            m([1.0, 0.0, 0.0, 1.0]),
            vec![vec![1.0, 1.0]],
        )
        .unwrap()
    }

    #[test]
    fn density_at_mode_in_two_dimensions() {
        let model = lq_model(&benchmark()).unwrap();
        let x = [0.3, -0.2];
        let y = [0.1, -0.2];
        let h = model.obs_density(0, &x, &[0.0, 0.0], &[1.0, 1.0], &y).unwrap();
        assert!((h - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite_r() {
        let mut p = benchmark();
        p.r[1] = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(p.validate().is_err());
    }

    #[test]
    fn running_cost_uses_the_law_mean() {
        let model = lq_model(&benchmark()).unwrap();
        let law = HiddenLaw::empirical(2, vec![1.0, 0.0, -1.0, 2.0]).unwrap();
        // x'Qx = (1+1)^2 = 4, mean (0, 1) gives 1, a'Ra = 2.
        let c = model.running_cost(0, &[1.0, 1.0], &law, &[1.0, -1.0]);
        assert!((c - 7.0).abs() < 1e-15);
    }
}
