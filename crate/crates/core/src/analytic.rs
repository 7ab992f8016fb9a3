//! Closed-form M/M/k results.
//!
//! Erlang C is evaluated through the Erlang B recurrence
//! `B(0) = 1, B(n) = a B(n-1) / (n + a B(n-1))`, then
//! `C = B / (1 - rho (1 - B))`. No factorials or powers appear, so the
//! evaluation stays finite for hundreds of servers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AnalyticError {
    #[error("unstable system: utilization {0} is not below 1")]
    Unstable(f64),
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("relative error is undefined for a zero reference")]
    ZeroReference,
}

/// A single-queue, `k`-server system with Poisson arrivals at rate
/// `lambda` and exponential service at rate `mu` per server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmkParams {
    pub k: u32,
    pub lambda: f64,
    pub mu: f64,
}

impl MmkParams {
    pub fn new(k: u32, lambda: f64, mu: f64) -> Result<Self, AnalyticError> {
        let p = Self { k, lambda, mu };
        p.check()?;
        Ok(p)
    }

    /// Parameters giving per-server utilization `rho` for a mean service
    /// time of `mean_service`.
    pub fn from_utilization(k: u32, rho: f64, mean_service: f64) -> Result<Self, AnalyticError> {
        let mu = 1.0 / mean_service;
        Self::new(k, rho * k as f64 * mu, mu)
    }

    pub fn rho(&self) -> f64 {
        self.lambda / (self.k as f64 * self.mu)
    }

    /// Offered load in Erlangs, `lambda / mu`.
    pub fn offered_load(&self) -> f64 {
        self.lambda / self.mu
    }

    fn check(&self) -> Result<(), AnalyticError> {
        if self.k == 0 {
            return Err(AnalyticError::InvalidParameter { name: "k", value: 0.0 });
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(AnalyticError::InvalidParameter { name: "lambda", value: self.lambda });
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(AnalyticError::InvalidParameter { name: "mu", value: self.mu });
        }
        let rho = self.rho();
        if rho >= 1.0 {
            return Err(AnalyticError::Unstable(rho));
        }
        Ok(())
    }
}

/// Probability that an arrival has to wait.
pub fn erlang_c(p: &MmkParams) -> Result<f64, AnalyticError> {
    p.check()?;
    let a = p.offered_load();
    let mut b = 1.0;
    for n in 1..=p.k {
        b = a * b / (n as f64 + a * b);
    }
    let rho = p.rho();
    Ok(b / (1.0 - rho * (1.0 - b)))
}

/// Mean time spent in the queue, `C / (k mu - lambda)`.
pub fn mmk_mean_wait(p: &MmkParams) -> Result<f64, AnalyticError> {
    let c = erlang_c(p)?;
    Ok(c / (p.k as f64 * p.mu - p.lambda))
}

pub fn relative_error(w_sim: f64, w_ref: f64) -> Result<f64, AnalyticError> {
    if w_ref == 0.0 {
        return Err(AnalyticError::ZeroReference);
    }
    Ok(((w_sim - w_ref) / w_ref).abs())
}

/// One point of a simulated-versus-analytical comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub w_sim: f64,
    pub w_mmk: f64,
    pub relative_error: f64,
}

impl ErrorSample {
    pub fn new(w_sim: f64, w_mmk: f64) -> Result<Self, AnalyticError> {
        Ok(Self {
            w_sim,
            w_mmk,
            relative_error: relative_error(w_sim, w_mmk)?,
        })
    }
}
