//! Moment matching for the approximating laws `NB(alpha, p)` and
//! `NB(alpha, p) * Ge(p_hat)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::{admissible_eta, AggregateMoments, EtaDiagnostics};

/// Relative tolerance of the post-fit check for three-parameter matching.
pub const THREE_PARAM_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NbParams {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
}

impl NbParams {
    pub fn new(alpha: f64, p: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParams(format!("alpha = {alpha} must be positive")));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParams(format!("p = {p} must lie in (0, 1)")));
        }
        Ok(Self { alpha, p, q: 1.0 - p })
    }

    pub fn mean(&self) -> f64 {
        self.alpha * self.q / self.p
    }

    pub fn variance(&self) -> f64 {
        self.alpha * self.q / (self.p * self.p)
    }

    pub fn alpha_q(&self) -> f64 {
        self.alpha * self.q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThreeParamFit {
    pub nb: NbParams,
    pub p_hat: f64,
    pub q_hat: f64,
    /// Size of the NB law the V-operator perturbs.
    pub r: f64,
    pub eta: EtaDiagnostics,
}

impl ThreeParamFit {
    /// `r q - |q_hat - q| q_hat / p_hat^2`, the denominator of the bound.
    pub fn denominator(&self) -> f64 {
        let q = self.nb.q;
        self.r * q - (self.q_hat - q).abs() * self.q_hat / (self.p_hat * self.p_hat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OneParamMode {
    FixedAlpha(f64),
    FixedP(f64),
}

pub fn match_one_param(m: &AggregateMoments, mode: OneParamMode) -> Result<NbParams> {
    if !(m.mu > 0.0) {
        return Err(Error::param("mu", format!("{} must be positive", m.mu)));
    }
    match mode {
        OneParamMode::FixedAlpha(alpha) => {
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(Error::param("alpha", format!("{alpha} must be positive")));
            }
            NbParams::new(alpha, alpha / (alpha + m.mu))
        }
        OneParamMode::FixedP(p) => {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::param("p", format!("{p} is not in (0, 1)")));
            }
            NbParams::new(m.mu * p / (1.0 - p), p)
        }
    }
}

pub fn match_two_param(m: &AggregateMoments) -> Result<NbParams> {
    if !m.overdispersed() {
        return Err(Error::OverdispersedRequired {
            mu: m.mu,
            sigma2: m.sigma2,
        });
    }
    NbParams::new(m.mu * m.mu / m.mu2, m.mu / m.sigma2)
}

pub fn match_three_param(m: &AggregateMoments) -> Result<ThreeParamFit> {
    if !m.overdispersed() {
        return Err(Error::OverdispersedRequired {
            mu: m.mu,
            sigma2: m.sigma2,
        });
    }
    let eta = admissible_eta(m)?;
    // x = eta / (3 mu) is the mean of the geometric part
    let x = eta.eta / (3.0 * m.mu);
    let p_hat = 1.0 / (1.0 + x);
    let q_hat = x / (1.0 + x);
    let alpha = (m.mu - x).powi(2) / (m.mu2 - x * x);
    let p = (m.mu - x) / (m.sigma2 - x * (x + 1.0));
    if !(p_hat > 0.0 && p_hat <= 1.0) {
        return Err(Error::InvalidParams(format!("p_hat = {p_hat} outside (0, 1]")));
    }
    let nb = NbParams::new(alpha, p)?;
    let q = nb.q;
    let r = alpha + 1.0 + (q_hat - q) / (q * p_hat);

    let checks = [
        (alpha * q / p + x, m.mu, "mean"),
        (alpha * (q / p).powi(2) + x * x, m.mu2, "second factorial cumulant"),
        (alpha * (q / p).powi(3) + x.powi(3), m.mu3 / 2.0, "third factorial cumulant"),
    ];
    for (fitted, target, what) in checks {
        if (fitted - target).abs() > THREE_PARAM_RESIDUAL * target.abs() {
            return Err(Error::InadmissibleEta(format!(
                "fit misses the {what}: {fitted} vs {target}"
            )));
        }
    }
    Ok(ThreeParamFit {
        nb,
        p_hat,
        q_hat,
        r,
        eta,
    })
}

/// Checks that `params` reproduces the mean (and the variance for
/// two-parameter fits) of `m` to relative `tol`.
pub fn check_params(m: &AggregateMoments, params: &NbParams, match_variance: bool, tol: f64) -> Result<()> {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    if rel(params.mean(), m.mu) > tol {
        return Err(Error::ParamsMismatch(format!(
            "alpha q / p = {} but mu = {}",
            params.mean(),
            m.mu
        )));
    }
    if match_variance && rel(params.variance(), m.sigma2) > tol {
        return Err(Error::ParamsMismatch(format!(
            "alpha q / p^2 = {} but sigma^2 = {}",
            params.variance(),
            m.sigma2
        )));
    }
    Ok(())
}
