//! Truncated probability mass functions on the nonnegative integers.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{kahan_sum, KahanSum};

/// Total-mass slack allowed by [`Pmf::new`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Negative entries down to this magnitude are treated as cancellation noise
/// and clamped to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-12;

/// Probabilities `P(X = m)` for `m < len`, plus the mass left beyond the
/// stored range. The tail is tracked, never folded back in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pmf {
    probs: Vec<f64>,
    tail_mass: f64,
    clamped: usize,
}

impl Pmf {
    /// Validating constructor: total mass must be 1 within [`MASS_TOLERANCE`].
    pub fn new(probs: Vec<f64>, tail_mass: f64) -> Result<Self> {
        let pmf = Self::from_parts(probs, tail_mass)?;
        let total = pmf.total_mass();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidPmf(format!(
                "total mass {total} differs from 1 by more than {MASS_TOLERANCE:e}"
            )));
        }
        Ok(pmf)
    }

    /// Builds a pmf whose tail is `1 - sum(probs)`, clamped at zero.
    pub fn with_implied_tail(probs: Vec<f64>) -> Result<Self> {
        let head = kahan_sum(probs.iter().copied());
        let tail = (1.0 - head).max(0.0);
        Self::new(probs, tail)
    }

    /// Like [`Pmf::new`] but skips the total-mass check; used for
    /// intermediate results whose mass is accounted for by the caller.
    pub(crate) fn from_parts(mut probs: Vec<f64>, tail_mass: f64) -> Result<Self> {
        let mut clamped = 0;
        for (m, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidPmf(format!("non-finite probability at {m}")));
            }
            if *p < 0.0 {
                if *p < -NEGATIVE_CLAMP {
                    return Err(Error::InvalidPmf(format!("negative probability {p} at {m}")));
                }
                *p = 0.0;
                clamped += 1;
            }
        }
        if !(tail_mass.is_finite() && tail_mass >= 0.0) {
            return Err(Error::InvalidPmf(format!("tail mass {tail_mass} out of range")));
        }
        Ok(Self {
            probs,
            tail_mass: tail_mass.min(1.0),
            clamped,
        })
    }

    pub fn point_mass(at: usize, len: usize) -> Self {
        let len = len.max(at + 1);
        let mut probs = vec![0.0; len];
        probs[at] = 1.0;
        Self {
            probs,
            tail_mass: 0.0,
            clamped: 0,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Number of tiny negative entries that were clamped to zero.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// `P(X = m)`, zero beyond the stored range.
    pub fn get(&self, m: usize) -> f64 {
        self.probs.get(m).copied().unwrap_or(0.0)
    }

    pub fn head_mass(&self) -> f64 {
        kahan_sum(self.probs.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        self.head_mass() + self.tail_mass
    }

    /// Mean over the stored range only.
    pub fn truncated_mean(&self) -> f64 {
        kahan_sum(self.probs.iter().enumerate().map(|(m, p)| m as f64 * p))
    }

    /// Rough estimate of `E[X; X >= len]`, extrapolating the last ratio of
    /// consecutive probabilities as a geometric tail.
    pub fn tail_first_moment(&self) -> f64 {
        let n = self.probs.len();
        if self.tail_mass == 0.0 {
            return 0.0;
        }
        let ratio = if n >= 2 && self.probs[n - 2] > 0.0 {
            (self.probs[n - 1] / self.probs[n - 2]).clamp(0.0, 1.0 - 1e-12)
        } else {
            0.5
        };
        self.tail_mass * (n as f64 + ratio / (1.0 - ratio))
    }

    /// Restricts to the first `len` entries, moving the rest into the tail.
    pub fn truncate(&self, len: usize) -> Self {
        if len >= self.probs.len() {
            return self.clone();
        }
        let moved: KahanSum = self.probs[len..].iter().copied().collect();
        Self {
            probs: self.probs[..len].to_vec(),
            tail_mass: self.tail_mass + moved.value(),
            clamped: self.clamped,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_missing_mass() {
        assert!(Pmf::new(vec![0.5, 0.25], 0.0).is_err());
        assert!(Pmf::new(vec![0.5, 0.25], 0.25).is_ok());
    }

    #[test]
    fn clamps_rounding_noise_and_reports_it() {
        let p = Pmf::new(vec![0.5, -1e-15, 0.5], 0.0).unwrap();
        assert_eq!(p.get(1), 0.0);
        assert_eq!(p.clamped(), 1);
        assert!(Pmf::new(vec![0.6, -0.1, 0.5], 0.0).is_err());
    }

    #[test]
    fn truncate_moves_mass_to_tail() {
        let p = Pmf::new(vec![0.5, 0.25, 0.125], 0.125).unwrap();
        let t = p.truncate(1);
        assert_eq!(t.len(), 1);
        assert!((t.tail_mass() - 0.5).abs() < 1e-15);
    }
}
