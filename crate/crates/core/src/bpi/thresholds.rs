//! Confidence thresholds `beta^r`, `beta^p` and their combination `beta`.

use std::f64::consts::E;

use super::BpiError;

/// Thresholds for a fixed `(S, A, H, delta)`; `t` may be a real pseudo-count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    num_states: usize,
    log_term: f64,
}

impl Thresholds {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize, delta: f64) -> Result<Self, BpiError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(BpiError::InvalidDelta(delta));
        }
        let sah = (3 * num_states * num_actions * horizon) as f64;
        Ok(Thresholds { num_states, log_term: (sah / delta).ln() })
    }

    /// Thresholds with a caller-supplied `ln(3SAH / delta)`; lets `delta` reach 1.
    pub fn with_log_term(num_states: usize, log_term: f64) -> Self {
        Thresholds { num_states, log_term }
    }

    /// `ln(3SAH / delta)`.
    pub fn log_term(&self) -> f64 {
        self.log_term
    }

    pub fn beta_r(&self, t: f64) -> f64 {
        0.5 * (self.log_term + (E * (1.0 + t)).ln())
    }

    /// For `S = 1` the `(S-1)` term is taken at its limit, zero.
    pub fn beta_p(&self, t: f64) -> f64 {
        if self.num_states < 2 {
            return self.log_term;
        }
        let k = (self.num_states - 1) as f64;
        self.log_term + k * (E * (1.0 + t / k)).ln()
    }

    pub fn beta(&self, t: f64) -> f64 {
        let s = self.beta_r(t).sqrt() + (2.0 * self.beta_p(t)).sqrt();
        s * s
    }
}

pub fn threshold_beta_r(
    t: f64,
    delta: f64,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
) -> Result<f64, BpiError> {
    Ok(Thresholds::new(num_states, num_actions, horizon, delta)?.beta_r(t))
}

pub fn threshold_beta_p(
    t: f64,
    delta: f64,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
) -> Result<f64, BpiError> {
    Ok(Thresholds::new(num_states, num_actions, horizon, delta)?.beta_p(t))
}

pub fn threshold_beta(
    t: f64,
    delta: f64,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
) -> Result<f64, BpiError> {
    Ok(Thresholds::new(num_states, num_actions, horizon, delta)?.beta(t))
}
