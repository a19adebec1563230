//! Drift horizon for Gaussian streams with a steadily moving mean.
//!
//! With `x_t ~ N(mu_t, sigma^2 I)` in `R^d` and `|mu_t - mu_t'| >= (t' - t) alpha`,
//! let `S_t = { x : |x - mu_t|_2 <= sigma sqrt(d (1 + eps)) }`. For any lag
//! `tau > 2 sigma sqrt(d (1 + eps)) / alpha`, with probability at least
//! `1 - 2 exp(-d eps^2 / 8)` both `x_t in S_t` and `x_{t+tau} not in S_t`: the
//! stream has left the region of its earlier distribution, so a memory spanning
//! more than `tau` steps keeps stale records around.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftBoundInputs {
    pub sigma: f64,
    pub dim: usize,
    pub epsilon: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftBound {
    /// `2 sigma sqrt(d (1 + eps)) / alpha`.
    pub horizon: f64,
    /// `2 exp(-d eps^2 / 8)`.
    pub failure_probability: f64,
}

impl DriftBound {
    /// Lower bound on the probability of the separation event.
    pub fn guarantee(&self) -> f64 {
        1.0 - self.failure_probability
    }
}

impl DriftBoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.dim == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::config(format!(
                "epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::config(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Radius of `S_t`: `sigma sqrt(d (1 + eps))`.
    pub fn radius(&self) -> f64 {
        self.sigma * (self.dim as f64 * (1.0 + self.epsilon)).sqrt()
    }
}

pub fn memory_size_bound(inputs: &DriftBoundInputs) -> Result<DriftBound> {
    inputs.validate()?;
    let d = inputs.dim as f64;
    Ok(DriftBound {
        horizon: 2.0 * inputs.radius() / inputs.alpha,
        failure_probability: 2.0 * (-d * inputs.epsilon * inputs.epsilon / 8.0).exp(),
    })
}
