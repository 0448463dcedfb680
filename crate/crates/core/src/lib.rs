//! Optimal control of partially observed discrete-time mean-field systems.
//!
//! The crate implements dynamic programming on the space of joint laws of
//! hidden state and observation, a fully discrete quantized version of it
//! (Lloyd grids, Monte Carlo kernels, a codebook of joint marginals), the
//! discrete Kallianpur-Streibel filter, the closed-form solution of the
//! linear-quadratic case, and a batch simulator used to evaluate policies.

pub mod dp;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod filter;
mod linalg;
pub mod lq_analytic;
pub mod measures;
pub mod model;
pub mod quantize;
pub mod rng;
pub mod simkit;

pub use error::{Error, Result};
