//! Aggregate factorial cumulants of `Y = sum X_i` and the cubic root machinery
//! behind three-parameter matching.

use num_complex::Complex64;
use serde::Serialize;

use crate::dist::ComponentSpec;
use crate::error::{Error, Result};
use crate::numeric::KahanSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateMoments {
    pub mu: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub sigma2: f64,
}

impl AggregateMoments {
    pub fn overdispersed(&self) -> bool {
        self.sigma2 > self.mu && self.mu2 > 0.0
    }
}

pub fn aggregate(mixture: &[ComponentSpec]) -> Result<AggregateMoments> {
    if mixture.is_empty() {
        return Err(Error::EmptyMixture);
    }
    let (mut mu, mut mu2, mut mu3) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
    for spec in mixture {
        let (g, gp, gpp) = spec.moments()?;
        let c = spec.count() as f64;
        mu.add(c * g);
        mu2.add(c * gp);
        mu3.add(c * gpp);
    }
    let (mu, mu2, mu3) = (mu.value(), mu2.value(), mu3.value());
    Ok(AggregateMoments {
        mu,
        mu2,
        mu3,
        sigma2: mu + mu2,
    })
}

/// Which root of the resolvent cubic was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaBranch {
    /// Nonnegative discriminant: real cube root of a real radicand.
    Real,
    /// Negative discriminant: principal cube root of a complex radicand.
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaDiagnostics {
    pub eta1: f64,
    pub eta2: f64,
    pub discriminant: f64,
    pub eta3: f64,
    pub eta3_imag: f64,
    /// Imaginary part left in `eta` after complex evaluation.
    pub eta_imag_residual: f64,
    pub eta: f64,
    pub branch: EtaBranch,
    pub admissible: bool,
}

/// Relative tolerance on the imaginary part of `eta`.
pub const ETA_IMAG_TOLERANCE: f64 = 1e-9;
/// `|eta| <= ETA_ZERO_CLAMP * mu2` is treated as exactly zero.
pub const ETA_ZERO_CLAMP: f64 = 1e-8;

/// Computes `eta = 2 mu2 + eta1/eta3 - eta3` with
/// `eta3^3 = (eta2 + sqrt(4 eta1^3 + eta2^2)) / 2`.
///
/// For a nonnegative discriminant the radicand is real and its real cube
/// root is used, whatever its sign; otherwise the principal complex root,
/// for which `eta` comes out real up to rounding. Admissibility asks for a
/// real, nonnegative `eta`.
pub fn eta(m: &AggregateMoments) -> EtaDiagnostics {
    let AggregateMoments { mu, mu2, mu3, .. } = *m;
    let eta1 = 1.5 * mu * mu3 - 4.0 * mu2 * mu2;
    let eta2 = 27.0 * mu * mu * mu2 * mu2 - 16.0 * mu2.powi(3) - 13.5 * mu.powi(3) * mu3
        + 9.0 * mu * mu2 * mu3;
    let discriminant = 4.0 * eta1.powi(3) + eta2 * eta2;

    let (eta3, branch) = if discriminant >= 0.0 {
        let w = 0.5 * (eta2 + discriminant.sqrt());
        (Complex64::new(w.cbrt(), 0.0), EtaBranch::Real)
    } else {
        let w = Complex64::new(0.5 * eta2, 0.5 * (-discriminant).sqrt());
        (w.cbrt(), EtaBranch::Complex)
    };

    let mut diag = EtaDiagnostics {
        eta1,
        eta2,
        discriminant,
        eta3: eta3.re,
        eta3_imag: eta3.im,
        eta_imag_residual: f64::NAN,
        eta: f64::NAN,
        branch,
        admissible: false,
    };
    if !(mu2 > 0.0) || eta3.norm() == 0.0 || !eta3.re.is_finite() {
        return diag;
    }
    let e = Complex64::new(2.0 * mu2, 0.0) + Complex64::new(eta1, 0.0) / eta3 - eta3;
    let mut value = e.re;
    if value.abs() <= ETA_ZERO_CLAMP * mu2 {
        value = 0.0;
    }
    diag.eta = value;
    diag.eta_imag_residual = e.im;
    diag.admissible =
        e.im.abs() <= ETA_IMAG_TOLERANCE * value.abs().max(1.0) && value >= 0.0 && value.is_finite();
    diag
}

/// [`eta`] as a fallible step: errors unless the result is admissible.
pub fn admissible_eta(m: &AggregateMoments) -> Result<EtaDiagnostics> {
    if !(m.mu2 > 0.0) {
        return Err(Error::InadmissibleEta(format!(
            "second factorial cumulant {} is not positive",
            m.mu2
        )));
    }
    let d = eta(m);
    if d.admissible {
        Ok(d)
    } else {
        Err(Error::InadmissibleEta(format!(
            "eta = {} with imaginary residual {:e}",
            d.eta, d.eta_imag_residual
        )))
    }
}
