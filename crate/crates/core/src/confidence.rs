//! Confidence-width schedules for the latency and cost surrogates.
//!
//! `beta = B + R / sqrt(n) * sqrt(2 (gamma_t + 1 + ln(2D / delta)))`, where
//! `n = tau_dm / tau_i` is the number of samples averaged per decision.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    /// RKHS norm bound of the modelled function.
    pub rkhs_norm_bound: f64,
    /// Sub-Gaussian norm of a single noisy sample.
    pub noise_norm: f64,
    /// Samples averaged per decision, `tau_dm / tau_i`.
    pub epoch_ratio: f64,
    pub num_domains: usize,
    pub failure_prob: f64,
}

impl ConfidenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.failure_prob > 0.0 && self.failure_prob < 1.0) {
            return Err(Error::InvalidInput(format!(
                "failure probability must lie in (0, 1), got {}",
                self.failure_prob
            )));
        }
        if !(self.rkhs_norm_bound.is_finite() && self.rkhs_norm_bound > 0.0) {
            return Err(Error::InvalidInput(format!(
                "RKHS norm bound must be positive, got {}",
                self.rkhs_norm_bound
            )));
        }
        if !(self.noise_norm.is_finite() && self.noise_norm >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise norm must be nonnegative, got {}",
                self.noise_norm
            )));
        }
        if !(self.epoch_ratio.is_finite() && self.epoch_ratio >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "epoch ratio must be at least 1, got {}",
                self.epoch_ratio
            )));
        }
        if self.num_domains == 0 {
            return Err(Error::InvalidInput("number of domains must be positive".into()));
        }
        Ok(())
    }
}

/// The noise-dependent part of the width, `R / sqrt(n) * sqrt(2 (gamma + 1 + ln(2D/delta)))`.
pub fn noise_term(params: &ConfidenceParams, gamma_t: f64) -> Result<f64> {
    params.validate()?;
    if !(gamma_t.is_finite() && gamma_t >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "information gain must be nonnegative, got {gamma_t}"
        )));
    }
    let log_term = (2.0 * params.num_domains as f64 / params.failure_prob).ln();
    let root = (2.0 * (gamma_t + 1.0 + log_term)).sqrt();
    Ok(params.noise_norm / params.epoch_ratio.sqrt() * root)
}

/// Confidence width for round `t` given the information-gain value `gamma_t`.
pub fn beta(params: &ConfidenceParams, gamma_t: f64) -> Result<f64> {
    Ok(params.rkhs_norm_bound + noise_term(params, gamma_t)?)
}
