//! Weibull tail models fitted by maximum likelihood.
//!
//! The model is the three-parameter Weibull with location `tau`, scale
//! `lambda` and shape `kappa`:
//!
//! ```text
//! F(d) = 1 - exp(-((d - tau) / lambda)^kappa)    for d > tau, 0 otherwise
//! ```
//!
//! [`fit_tail`] keeps the `tail_size` largest distances and solves the
//! two-parameter MLE on them. The shape solves the profile equation
//!
//! ```text
//! sum(d^k ln d) / sum(d^k) - 1/k - mean(ln d) = 0
//! ```
//!
//! which is strictly increasing in `k`, after which
//! `lambda = (sum(d^k) / n)^(1/k)`. Logs are centered before solving so the
//! shape is exactly invariant to rescaling the data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const KAPPA_MIN: f64 = 1e-3;
const KAPPA_MAX: f64 = 1e3;
const RESIDUAL_TOL: f64 = 1e-10;
const MAX_ITER: usize = 200;

/// How the location parameter is chosen when fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    /// `tau = 0`; distances are used as-is.
    #[default]
    Zero,
    /// `tau = 0.99 * min(tail)`; the MLE runs on the shifted tail.
    Shift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullModel {
    pub tau: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub tail_size: usize,
    pub n_fit: usize,
}

impl WeibullModel {
    /// A model with explicit parameters, validated.
    pub fn new(tau: f64, lambda: f64, kappa: f64) -> Result<Self> {
        let m = WeibullModel {
            tau,
            lambda,
            kappa,
            tail_size: 0,
            n_fit: 0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| Error::InvalidParameter {
            name,
            reason: reason.to_string(),
        };
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(bad("lambda", "must be finite and > 0"));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(bad("kappa", "must be finite and > 0"));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(bad("tau", "must be finite and >= 0"));
        }
        Ok(())
    }

    fn reduced(&self, d: f64) -> Option<f64> {
        (d > self.tau).then(|| ((d - self.tau) / self.lambda).powf(self.kappa))
    }

    /// `P(D <= d)`.
    pub fn cdf(&self, d: f64) -> f64 {
        self.reduced(d).map_or(0.0, |z| -(-z).exp_m1())
    }

    /// `P(D > d) = exp(-((d - tau) / lambda)^kappa)`, 1 at or below `tau`.
    pub fn survival(&self, d: f64) -> f64 {
        self.reduced(d).map_or(1.0, |z| (-z).exp())
    }

    pub fn pdf(&self, d: f64) -> f64 {
        if d <= self.tau {
            return 0.0;
        }
        let x = (d - self.tau) / self.lambda;
        self.kappa / self.lambda * x.powf(self.kappa - 1.0) * (-x.powf(self.kappa)).exp()
    }

    /// Sum of log-densities. Every datum must lie strictly above `tau`.
    pub fn log_likelihood(&self, data: &[f64]) -> Result<f64> {
        let (ln_k, ln_l) = (self.kappa.ln(), self.lambda.ln());
        data.iter().try_fold(0.0, |acc, &d| {
            if d.is_nan() || d <= self.tau {
                return Err(Error::InvalidParameter {
                    name: "data",
                    reason: format!("datum {d} is not above tau = {}", self.tau),
                });
            }
            let x = d - self.tau;
            Ok(acc + ln_k - self.kappa * ln_l + (self.kappa - 1.0) * x.ln()
                - (x / self.lambda).powf(self.kappa))
        })
    }
}

/// Free-function form of [`WeibullModel::cdf`].
pub fn cdf(model: &WeibullModel, d: f64) -> f64 {
    model.cdf(d)
}

/// Free-function form of [`WeibullModel::log_likelihood`].
pub fn log_likelihood(model: &WeibullModel, data: &[f64]) -> Result<f64> {
    model.log_likelihood(data)
}

/// The `tail_size` largest values, in descending order. Equal values keep
/// their input order, so the selection is deterministic at the boundary.
pub fn select_tail(distances: &[f64], tail_size: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..distances.len()).collect();
    idx.sort_by(|&a, &b| distances[b].total_cmp(&distances[a]).then(a.cmp(&b)));
    idx.truncate(tail_size);
    idx.into_iter().map(|i| distances[i]).collect()
}

/// Fits a Weibull model to the largest `tail_size` distances with `tau = 0`.
pub fn fit_tail(distances: &[f64], tail_size: usize) -> Result<WeibullModel> {
    fit_tail_with(distances, tail_size, FitMode::Zero)
}

pub fn fit_tail_with(distances: &[f64], tail_size: usize, mode: FitMode) -> Result<WeibullModel> {
    if tail_size < 2 {
        return Err(Error::InvalidParameter {
            name: "tail_size",
            reason: format!("must be >= 2, got {tail_size}"),
        });
    }
    if let Some(d) = distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::InvalidParameter {
            name: "distances",
            reason: format!("distance {d} is not a finite non-negative number"),
        });
    }
    let usable: Vec<f64> = distances.iter().copied().filter(|&d| d > 0.0).collect();
    let tail = select_tail(&usable, tail_size);
    if tail.len() < 2 {
        return Err(Error::Unfittable(format!(
            "need at least 2 positive distances, got {}",
            tail.len()
        )));
    }
    let tau = match mode {
        FitMode::Zero => 0.0,
        FitMode::Shift => 0.99 * tail[tail.len() - 1],
    };
    let shifted: Vec<f64> = tail.iter().map(|d| d - tau).collect();
    let (kappa, lambda) = fit_two_parameter(&shifted)?;
    Ok(WeibullModel {
        tau,
        lambda,
        kappa,
        tail_size,
        n_fit: tail.len(),
    })
}

/// Profile-equation residual and its derivative at `kappa` for centered logs.
fn profile(centered: &[f64], x_max: f64, kappa: f64) -> (f64, f64, f64) {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &x in centered {
        let w = (kappa * (x - x_max)).exp();
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
    }
    let mean = s1 / s0;
    let var = (s2 / s0 - mean * mean).max(0.0);
    (mean - 1.0 / kappa, var + 1.0 / (kappa * kappa), s0)
}

/// Two-parameter MLE `(kappa, lambda)` for strictly positive data.
fn fit_two_parameter(data: &[f64]) -> Result<(f64, f64)> {
    let n = data.len() as f64;
    let logs: Vec<f64> = data.iter().map(|d| d.ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / n;
    let centered: Vec<f64> = logs.iter().map(|l| l - mean_log).collect();
    let x_max = centered.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x_min = centered.iter().copied().fold(f64::INFINITY, f64::min);
    if x_max - x_min <= 1e-12 * (1.0 + mean_log.abs()) {
        return Err(Error::Unfittable(
            "all tail values are identical (zero-variance tail)".into(),
        ));
    }

    let (mut lo, mut hi) = (KAPPA_MIN, KAPPA_MAX);
    let (g_lo, _, _) = profile(&centered, x_max, lo);
    let (g_hi, _, _) = profile(&centered, x_max, hi);
    if g_lo > 0.0 || g_hi < 0.0 {
        return Err(Error::Unfittable(format!(
            "shape MLE lies outside [{KAPPA_MIN}, {KAPPA_MAX}]"
        )));
    }

    let mut kappa = 1.0;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let (g, dg, s0) = profile(&centered, x_max, kappa);
        residual = g;
        if g.abs() < RESIDUAL_TOL {
            let log_lambda = mean_log + x_max + (s0 / n).ln() / kappa;
            return Ok((kappa, log_lambda.exp()));
        }
        if g > 0.0 {
            hi = kappa;
        } else {
            lo = kappa;
        }
        let newton = kappa - g / dg;
        kappa = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITER,
        residual,
    })
}
