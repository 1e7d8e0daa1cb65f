//! Pointwise Stein operators and the characterizing identity `E[A g] = 0`.
//!
//! Every operator here has the shape
//! `A g(m) = q (c + m) g(m+1) - m g(m) + sum_{l>=0} e_l g(m+l+1)`
//! with a decaying coefficient sequence `e`, truncated after `L` terms.

use rand::Rng;
use serde::Serialize;

use crate::dist::ComponentSpec;
use crate::error::{Error, Result};
use crate::k1k2::{b_coeffs, K1K2Config};
use crate::matching::{NbParams, ThreeParamFit};
use crate::numeric::{geometric_tail, KahanSum, Weight};
use crate::bounds::series_term;
use crate::pmf::Pmf;

/// `g(0), ..., g(R)` with `g(0) = 0`, extended by the constant `g(R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    values: Vec<f64>,
}

impl TestFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        match values.first() {
            None => return Err(Error::param("g", "needs at least g(0)")),
            Some(&g0) if g0 != 0.0 => return Err(Error::param("g", format!("g(0) = {g0}, must be 0"))),
            _ => {}
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::param("g", format!("non-finite value {bad}")));
        }
        Ok(Self { values })
    }

    pub fn zero() -> Self {
        Self { values: vec![0.0] }
    }

    /// `1{m = j}` for `j >= 1`, zero beyond `j`.
    pub fn indicator(j: usize) -> Result<Self> {
        if j == 0 {
            return Err(Error::param("j", "g(0) must vanish"));
        }
        let mut values = vec![0.0; j + 2];
        values[j] = 1.0;
        Ok(Self { values })
    }

    /// Independent uniform values in `[-1, 1]` on `1..=range`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, range: usize) -> Self {
        let mut values = vec![0.0; range + 1];
        for v in values.iter_mut().skip(1) {
            *v = rng.random_range(-1.0..=1.0);
        }
        Self { values }
    }

    pub fn get(&self, m: usize) -> f64 {
        self.values[m.min(self.values.len() - 1)]
    }

    /// Last stored index; `g` is constant from here on.
    pub fn range(&self) -> usize {
        self.values.len() - 1
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |s, v| s.max(v.abs()))
    }

    /// `a f + b g`.
    pub fn combine(a: f64, f: &Self, b: f64, g: &Self) -> Self {
        let n = f.values.len().max(g.values.len());
        Self {
            values: (0..n).map(|m| a * f.get(m) + b * g.get(m)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteinOperator {
    pub label: String,
    q: f64,
    c: f64,
    extra: Vec<f64>,
    /// `suffix[j] = sum_{l>=j} extra[l]`.
    suffix: Vec<f64>,
    extra_abs: f64,
    /// Bound on `sum_{l>L} |e_l|` for the neglected coefficients.
    pub remainder: f64,
}

impl SteinOperator {
    fn build(label: String, q: f64, c: f64, extra: Vec<f64>, remainder: f64) -> Self {
        let mut suffix = vec![0.0; extra.len() + 1];
        let mut acc = KahanSum::new();
        for l in (0..extra.len()).rev() {
            acc.add(extra[l]);
            suffix[l] = acc.value();
        }
        let extra_abs = extra.iter().map(|e| e.abs()).collect::<KahanSum>().value();
        Self {
            label,
            q,
            c,
            extra,
            suffix,
            extra_abs,
            remainder,
        }
    }

    /// `q (alpha + m) g(m+1) - m g(m)`.
    pub fn nb(params: &NbParams) -> Self {
        Self::build(format!("NB({}, {})", params.alpha, params.p), params.q, params.alpha, Vec::new(), 0.0)
    }

    /// Operator of `Y = sum X_i` written as a perturbation of the NB
    /// operator with parameters `params`.
    pub fn y(mixture: &[ComponentSpec], params: &NbParams, truncation: usize) -> Result<Self> {
        if mixture.is_empty() {
            return Err(Error::EmptyMixture);
        }
        let q = params.q;
        let mut extra = vec![0.0; truncation + 1];
        let mut first = KahanSum::new();
        for spec in mixture {
            first.add(spec.count() as f64 * spec.a_coeff(0));
        }
        extra[0] = first.value() - params.alpha_q();
        for (l, e) in extra.iter_mut().enumerate().skip(1) {
            *e = mixture
                .iter()
                .map(|s| s.count() as f64 * s.a_diff(l, q))
                .collect::<KahanSum>()
                .value();
        }
        let remainder = series_term(mixture, q, Weight::Unit, truncation)?.tail_estimate;
        Ok(Self::build("Y".into(), q, params.alpha, extra, remainder))
    }

    /// Operator of `NB(alpha, p) * Ge(p_hat)`:
    /// `q (alpha + 1 + m) g(m+1) - m g(m) + (q_hat - q) sum_l g(m+l+1) q_hat^l`.
    pub fn v(fit: &ThreeParamFit, truncation: usize) -> Self {
        let (q, q_hat) = (fit.nb.q, fit.q_hat);
        let scale = q_hat - q;
        let extra: Vec<f64> = (0..=truncation).map(|l| scale * q_hat.powi(l as i32)).collect();
        let remainder = if q_hat > 0.0 {
            scale.abs() * q_hat.powi(truncation as i32 + 1) / (1.0 - q_hat)
        } else {
            0.0
        };
        Self::build("V".into(), q, fit.nb.alpha + 1.0, extra, remainder)
    }

    /// Operator of the waiting time `T́` for `cfg`, perturbing the NB
    /// operator with parameters `params`:
    /// `q(alpha+m)g(m+1) + (n - alpha q) g(m+1) - m g(m)
    ///  + n sum_{l>=1} g(m+l+1)(b_l - q b_{l-1})
    ///  - n k a sum_{l>=k-1} g(m+l+1) b_{l-k+1}
    ///  + n q k a sum_{l>=k} g(m+l+1) b_{l-k}`.
    pub fn k1k2(cfg: &K1K2Config, params: &NbParams, truncation: usize) -> Result<Self> {
        let b = b_coeffs(cfg, truncation + 1)?;
        let (n, q, k, a) = (cfg.n as f64, params.q, cfg.k(), b.a());
        let nka = n * k as f64 * a;
        let mut extra = vec![0.0; truncation + 1];
        extra[0] = n - params.alpha_q();
        for (l, e) in extra.iter_mut().enumerate() {
            if l >= 1 {
                *e += n * (b.get(l) - q * b.get(l - 1));
            }
            if l + 1 >= k {
                *e -= nka * b.get(l + 1 - k);
            }
            if l >= k {
                *e += q * nka * b.get(l - k);
            }
        }
        let last = extra[truncation].abs();
        let remainder = geometric_tail(Weight::Unit, truncation, last, b.end_ratio());
        Ok(Self::build(
            format!("T({},{}; {}, n={})", cfg.k1, cfg.k2, cfg.p_bar, cfg.n),
            q,
            params.alpha,
            extra,
            remainder,
        ))
    }

    pub fn apply(&self, g: &TestFunction, m: usize) -> f64 {
        let mf = m as f64;
        let lead = self.q * (self.c + mf) * g.get(m + 1) - mf * g.get(m);
        if self.extra.is_empty() {
            return lead;
        }
        // g is constant from its range on, so the far part of the series
        // collapses onto a suffix sum
        let varying = g.range().saturating_sub(m + 1).min(self.extra.len());
        let mut acc = KahanSum::new();
        for (l, e) in self.extra[..varying].iter().enumerate() {
            acc.add(e * g.get(m + l + 1));
        }
        acc.add(g.get(g.range()) * self.suffix[varying]);
        lead + acc.value()
    }

    /// `(c0, c1)` with `|A g(m)| <= sup|g| (c0 + c1 m)` for every `m`.
    pub fn growth(&self) -> (f64, f64) {
        (self.q * self.c.abs() + self.extra_abs + self.remainder, 1.0 + self.q)
    }
}

pub fn nb_stein_apply(params: &NbParams, g: &TestFunction, m: usize) -> f64 {
    SteinOperator::nb(params).apply(g, m)
}

pub fn y_stein_apply(mixture: &[ComponentSpec], params: &NbParams, g: &TestFunction, m: usize, truncation: usize) -> Result<f64> {
    Ok(SteinOperator::y(mixture, params, truncation)?.apply(g, m))
}

pub fn v_stein_apply(fit: &ThreeParamFit, g: &TestFunction, m: usize, truncation: usize) -> f64 {
    SteinOperator::v(fit, truncation).apply(g, m)
}

pub fn k1k2_stein_apply(cfg: &K1K2Config, params: &NbParams, g: &TestFunction, m: usize, truncation: usize) -> Result<f64> {
    Ok(SteinOperator::k1k2(cfg, params, truncation)?.apply(g, m))
}

/// `Y`-operator minus NB operator in the expanded form
/// `sum_i sum_l sum_{j=1}^{l} Δg(m+j) (a_{i,l+1} - q a_{i,l})`, which holds
/// when `alpha q = p mu`.
pub fn y_perturbation(mixture: &[ComponentSpec], params: &NbParams, g: &TestFunction, m: usize, truncation: usize) -> f64 {
    let q = params.q;
    let mut acc = KahanSum::new();
    for l in 1..=truncation {
        let d: f64 = mixture.iter().map(|s| s.count() as f64 * s.a_diff(l, q)).sum();
        if d == 0.0 {
            continue;
        }
        // sum_{j=1}^{l} Δg(m+j) telescopes to g(m+l+1) - g(m+1)
        let delta_sum: f64 = (1..=l).map(|j| g.get(m + j + 1) - g.get(m + j)).sum();
        acc.add(delta_sum * d);
    }
    acc.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteinExpectation {
    pub value: f64,
    /// Bound on what the truncation of `pmf` and of the operator series
    /// may hide: `|E[A g]| <= |value| + tail_bound`.
    pub tail_bound: f64,
}

/// `sum_m A g(m) P(m)` over the stored range of `pmf`.
pub fn stein_expectation(op: &SteinOperator, pmf: &Pmf, g: &TestFunction) -> SteinExpectation {
    let value = (0..pmf.len())
        .filter(|&m| pmf.get(m) != 0.0)
        .map(|m| op.apply(g, m) * pmf.get(m))
        .collect::<KahanSum>()
        .value();
    let (c0, c1) = op.growth();
    let sup = g.sup_norm();
    let tail_bound = sup * (c0 * pmf.tail_mass() + c1 * pmf.tail_first_moment() + op.remainder);
    SteinExpectation { value, tail_bound }
}
