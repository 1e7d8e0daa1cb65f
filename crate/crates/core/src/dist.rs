//! Component distributions of the summands `X_i`.
//!
//! Each component is described by the power-series coefficients of its PGF
//! log-derivative, `M'(z)/M(z) = sum_m a_{m+1} z^m`:
//!
//! | kind        | `a_{m+1}`                          |
//! |-------------|------------------------------------|
//! | Ge(p)       | `q^{m+1}`                          |
//! | Bi(n, p)    | `n (-1)^m (p/q)^{m+1}`             |
//! | Po(lambda)  | `lambda` for `m = 0`, else `0`     |
//! | generic     | user-supplied, checked against pmf |

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{kahan_sum, ln_choose, ln_factorial, KahanSum};
use crate::pmf::Pmf;

/// Absolute tolerance of the PGF identity check for generic components.
pub const PGF_IDENTITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ComponentKind {
    Geometric { p: f64 },
    Poisson { lambda: f64 },
    Binomial { n: u32, p: f64 },
    Generic { a: Vec<f64>, pmf: Pmf },
}

/// Stated hypotheses of the closed-form bounds that a component violates.
/// They are carried along as warnings; bounds are still computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesisFlag {
    /// Geometric failure probability `q_i >= 1/2`.
    GeometricQAtLeastHalf,
    /// Binomial success probability `p_i >= 1/2`; the a-series no longer decays.
    BinomialPAtLeastHalf,
    /// Binomial/geometric side condition `n sum p_i^2 < sum q_j^2/p_j^2` fails.
    BinomialSideCondition,
    /// Underdispersed or equidispersed mixture (`sigma^2 <= mu`).
    NotOverdispersed,
    /// Truncated series had not decayed at the truncation length.
    TruncationDominated,
}

impl HypothesisFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            HypothesisFlag::GeometricQAtLeastHalf => "geometric_q_ge_half",
            HypothesisFlag::BinomialPAtLeastHalf => "binomial_p_ge_half",
            HypothesisFlag::BinomialSideCondition => "binomial_side_condition",
            HypothesisFlag::NotOverdispersed => "not_overdispersed",
            HypothesisFlag::TruncationDominated => "truncation_dominated",
        }
    }
}

impl Serialize for HypothesisFlag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// One independent summand, repeated `count` times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSpec {
    kind: ComponentKind,
    count: u32,
    flags: Vec<HypothesisFlag>,
}

fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("{p} is not in (0, 1)")))
    }
}

fn check_count(count: u32) -> Result<()> {
    if count == 0 {
        Err(Error::param("count", "must be at least 1"))
    } else {
        Ok(())
    }
}

impl ComponentSpec {
    pub fn geometric(p: f64, count: u32) -> Result<Self> {
        check_probability("p", p)?;
        check_count(count)?;
        Ok(Self::with_flags(ComponentKind::Geometric { p }, count))
    }

    pub fn poisson(lambda: f64, count: u32) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::param("lambda", format!("{lambda} is not positive")));
        }
        check_count(count)?;
        Ok(Self::with_flags(ComponentKind::Poisson { lambda }, count))
    }

    pub fn binomial(n: u32, p: f64, count: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        check_probability("p", p)?;
        check_count(count)?;
        Ok(Self::with_flags(ComponentKind::Binomial { n, p }, count))
    }

    /// A component given by its a-coefficients `a[m] = a_{m+1}` and its pmf.
    /// The two are checked against each other through the coefficient form
    /// of `M' = M G`: `(m+1) P(m+1) = sum_{l<=m} P(l) a_{m-l+1}`.
    pub fn generic(a: Vec<f64>, pmf: Pmf, count: u32) -> Result<Self> {
        check_count(count)?;
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("a", "coefficients must be finite"));
        }
        let total = pmf.total_mass();
        if (total - 1.0).abs() > crate::pmf::MASS_TOLERANCE {
            return Err(Error::InvalidPmf(format!("generic pmf has total mass {total}")));
        }
        let checked = pmf.len().saturating_sub(1).min(a.len()).min(50);
        for m in 0..checked {
            let lhs = (m + 1) as f64 * pmf.get(m + 1);
            let rhs = kahan_sum((0..=m).map(|l| pmf.get(l) * a.get(m - l).copied().unwrap_or(0.0)));
            let residual = lhs - rhs;
            if residual.abs() > PGF_IDENTITY_TOLERANCE {
                return Err(Error::InconsistentCoefficients { index: m, residual });
            }
        }
        Ok(Self::with_flags(ComponentKind::Generic { a, pmf }, count))
    }

    fn with_flags(kind: ComponentKind, count: u32) -> Self {
        let mut flags = Vec::new();
        match &kind {
            ComponentKind::Geometric { p } if 1.0 - p >= 0.5 => {
                flags.push(HypothesisFlag::GeometricQAtLeastHalf)
            }
            ComponentKind::Binomial { p, .. } if *p >= 0.5 => {
                flags.push(HypothesisFlag::BinomialPAtLeastHalf)
            }
            _ => {}
        }
        Self { kind, count, flags }
    }

    pub fn kind(&self) -> &ComponentKind {
        &self.kind
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn flags(&self) -> &[HypothesisFlag] {
        &self.flags
    }

    pub fn label(&self) -> String {
        let inner = match &self.kind {
            ComponentKind::Geometric { p } => format!("Ge({p})"),
            ComponentKind::Poisson { lambda } => format!("Po({lambda})"),
            ComponentKind::Binomial { n, p } => format!("Bi({n}, {p})"),
            ComponentKind::Generic { a, .. } => format!("generic[{}]", a.len()),
        };
        format!("{} x {}", self.count, inner)
    }

    /// `a_{m+1}`.
    pub fn a_coeff(&self, m: usize) -> f64 {
        match &self.kind {
            ComponentKind::Geometric { p } => (1.0 - p).powi(m as i32 + 1),
            ComponentKind::Poisson { lambda } => {
                if m == 0 {
                    *lambda
                } else {
                    0.0
                }
            }
            ComponentKind::Binomial { n, p } => {
                // log-magnitude plus sign; large n and m overflow otherwise
                let ln_mag = (*n as f64).ln() + (m as f64 + 1.0) * (p / (1.0 - p)).ln();
                let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
                sign * ln_mag.exp()
            }
            ComponentKind::Generic { a, .. } => a.get(m).copied().unwrap_or(0.0),
        }
    }

    /// `a_{l+1} - q a_l` for `l >= 1`, in closed form where one exists so that
    /// exact cancellation (e.g. `q_i = q`) survives rounding.
    pub fn a_diff(&self, l: usize, q: f64) -> f64 {
        debug_assert!(l >= 1);
        match &self.kind {
            ComponentKind::Geometric { p } => {
                let qi = 1.0 - p;
                qi.powi(l as i32) * (qi - q)
            }
            ComponentKind::Poisson { lambda } => {
                if l == 1 {
                    -q * lambda
                } else {
                    0.0
                }
            }
            ComponentKind::Binomial { n, p } => {
                let r = p / (1.0 - p);
                let ln_mag = (*n as f64).ln() + l as f64 * r.ln();
                let sign = if l.is_multiple_of(2) { 1.0 } else { -1.0 };
                sign * ln_mag.exp() * (r + q)
            }
            ComponentKind::Generic { .. } => self.a_coeff(l) - q * self.a_coeff(l - 1),
        }
    }

    /// Number of a-coefficients that can be nonzero (`None` when unbounded).
    pub fn a_support(&self) -> Option<usize> {
        match &self.kind {
            ComponentKind::Poisson { .. } => Some(1),
            ComponentKind::Generic { a, .. } => Some(a.len()),
            _ => None,
        }
    }

    /// The pmf of a single copy, truncated to `len` entries.
    pub fn pmf(&self, len: usize) -> Result<Pmf> {
        if len == 0 {
            return Err(Error::param("len", "truncation length must be at least 1"));
        }
        match &self.kind {
            ComponentKind::Geometric { p } => {
                let q = 1.0 - p;
                let mut probs = Vec::with_capacity(len);
                let mut v = *p;
                for _ in 0..len {
                    probs.push(v);
                    v *= q;
                }
                Pmf::new(probs, q.powi(len as i32))
            }
            ComponentKind::Poisson { lambda } => {
                let ln_l = lambda.ln();
                let probs: Vec<f64> = (0..len)
                    .map(|m| (-lambda + m as f64 * ln_l - ln_factorial(m as u64)).exp())
                    .collect();
                Pmf::with_implied_tail(probs)
            }
            ComponentKind::Binomial { n, p } => {
                let n = *n as u64;
                let (lp, lq) = (p.ln(), (1.0 - p).ln());
                let probs: Vec<f64> = (0..len as u64)
                    .map(|m| {
                        if m > n {
                            0.0
                        } else {
                            (ln_choose(n, m) + m as f64 * lp + (n - m) as f64 * lq).exp()
                        }
                    })
                    .collect();
                if len as u64 > n {
                    // full support stored; renormalization noise only
                    let head = kahan_sum(probs.iter().copied());
                    Pmf::new(probs.into_iter().map(|x| x / head).collect(), 0.0)
                } else {
                    Pmf::with_implied_tail(probs)
                }
            }
            ComponentKind::Generic { pmf, .. } => Ok(pmf.truncate(len)),
        }
    }

    /// `d_TV(X, X + 1)`: closed forms for geometric and Poisson, otherwise
    /// `1/2 sum |P(m) - P(m-1)|` over the pmf.
    pub fn dtv_self_shift(&self) -> f64 {
        match &self.kind {
            ComponentKind::Geometric { p } => *p,
            ComponentKind::Poisson { lambda } => poisson_mode_mass(*lambda),
            ComponentKind::Binomial { n, .. } => {
                let pmf = self.pmf(*n as usize + 1).expect("valid binomial");
                dtv_self_shift_from_pmf(&pmf)
            }
            ComponentKind::Generic { pmf, .. } => dtv_self_shift_from_pmf(pmf),
        }
    }

    /// `(G(1), G'(1), G''(1))` of the PGF log-derivative.
    pub fn moments(&self) -> Result<(f64, f64, f64)> {
        match &self.kind {
            ComponentKind::Geometric { p } => {
                let r = (1.0 - p) / p;
                Ok((r, r * r, 2.0 * r * r * r))
            }
            ComponentKind::Poisson { lambda } => Ok((*lambda, 0.0, 0.0)),
            ComponentKind::Binomial { n, p } => {
                let n = *n as f64;
                Ok((n * p, -n * p * p, 2.0 * n * p * p * p))
            }
            ComponentKind::Generic { a, .. } => generic_moments(a),
        }
    }
}

fn generic_moments(a: &[f64]) -> Result<(f64, f64, f64)> {
    let mut g0 = KahanSum::new();
    let mut g1 = KahanSum::new();
    let mut g2 = KahanSum::new();
    for (m, &x) in a.iter().enumerate() {
        let mf = m as f64;
        g0.add(x);
        g1.add(mf * x);
        g2.add(mf * (mf - 1.0) * x);
    }
    // Cauchy check on the most heavily weighted partial sum: the last few
    // terms must be negligible against the total.
    let len = a.len();
    if len > 0 {
        let tail_start = len.saturating_sub((len / 10).max(1));
        let tail: f64 = a[tail_start..]
            .iter()
            .enumerate()
            .map(|(j, x)| {
                let mf = (tail_start + j) as f64;
                (mf * mf.max(1.0) * x).abs()
            })
            .sum();
        let scale = 1.0 + g0.value().abs() + g1.value().abs() + g2.value().abs();
        if tail > 1e-8 * scale {
            let ratio = if len >= 2 && a[len - 2] != 0.0 {
                (a[len - 1] / a[len - 2]).abs()
            } else {
                f64::NAN
            };
            return Err(Error::NonDecayingSeries {
                truncation: len,
                ratio,
            });
        }
    }
    Ok((g0.value(), g1.value(), g2.value()))
}

/// `e^{-lambda} lambda^k / k!` at the mode `k = floor(lambda)`.
pub fn poisson_mode_mass(lambda: f64) -> f64 {
    let k = lambda.floor();
    (-lambda + k * lambda.ln() - ln_factorial(k as u64)).exp()
}

/// `1/2 sum_m |P(m) - P(m-1)|` with `P(-1) = 0`; the stored tail is assumed
/// to continue monotonically, so it contributes its last entry once more.
pub fn dtv_self_shift_from_pmf(pmf: &Pmf) -> f64 {
    let probs = pmf.probs();
    let mut acc = KahanSum::new();
    let mut prev = 0.0;
    for &p in probs {
        acc.add((p - prev).abs());
        prev = p;
    }
    // step down from the last stored value (exact when the tail is empty)
    acc.add(prev);
    0.5 * acc.value()
}

/// The closed-form binomial smoothness term used by the two-parameter
/// closed form: `C(n, M) p^M q^{n-M} - p^n / 2` with
/// `M = floor((n+1)p)`. Kept for comparison; the bounds use
/// the exact [`ComponentSpec::dtv_self_shift`].
pub fn binomial_mode_shift_term(n: u32, p: f64) -> f64 {
    let m = ((n as f64 + 1.0) * p).floor().min(n as f64) as u64;
    let n64 = n as u64;
    let mode = (ln_choose(n64, m) + m as f64 * p.ln() + (n64 - m) as f64 * (1.0 - p).ln()).exp();
    mode - p.powi(n as i32) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn a_coefficients() {
        let ge = ComponentSpec::geometric(0.5, 1).unwrap();
        assert_eq!(ge.a_coeff(0), 0.5);
        let po = ComponentSpec::poisson(2.0, 1).unwrap();
        assert_eq!(po.a_coeff(0), 2.0);
        assert_eq!(po.a_coeff(1), 0.0);
        let bi = ComponentSpec::binomial(3, 0.25, 1).unwrap();
        assert_relative_eq!(bi.a_coeff(1), -1.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn a_diff_agrees_with_coefficients() {
        let specs = [
            ComponentSpec::geometric(0.3, 2).unwrap(),
            ComponentSpec::binomial(4, 0.2, 1).unwrap(),
            ComponentSpec::poisson(1.5, 1).unwrap(),
        ];
        for s in &specs {
            for l in 1..30 {
                let direct = s.a_coeff(l) - 0.37 * s.a_coeff(l - 1);
                assert!((s.a_diff(l, 0.37) - direct).abs() < 1e-14, "{} l={l}", s.label());
            }
        }
    }

    #[test]
    fn component_pmfs() {
        let ge = ComponentSpec::geometric(0.5, 1).unwrap().pmf(3).unwrap();
        assert_eq!(ge.probs(), &[0.5, 0.25, 0.125]);
        assert_eq!(ge.tail_mass(), 0.125);

        let bi = ComponentSpec::binomial(2, 0.5, 1).unwrap().pmf(3).unwrap();
        for (x, y) in bi.probs().iter().zip([0.25, 0.5, 0.25]) {
            assert_relative_eq!(*x, y, max_relative = 1e-14);
        }
        assert_eq!(bi.tail_mass(), 0.0);

        let po = ComponentSpec::poisson(1.0, 1).unwrap().pmf(2).unwrap();
        let e = (-1.0f64).exp();
        assert_relative_eq!(po.get(0), e, max_relative = 1e-14);
        assert_relative_eq!(po.get(1), e, max_relative = 1e-14);
        assert_relative_eq!(po.tail_mass(), 1.0 - 2.0 * e, max_relative = 1e-12);
    }

    #[test]
    fn shift_smoothness() {
        assert_eq!(ComponentSpec::geometric(0.5, 1).unwrap().dtv_self_shift(), 0.5);
        let po = ComponentSpec::poisson(1.0, 1).unwrap();
        assert_relative_eq!(po.dtv_self_shift(), (-1.0f64).exp(), max_relative = 1e-12);
        // brute force for the closed forms
        let ge = ComponentSpec::geometric(0.3, 1).unwrap();
        let from_pmf = dtv_self_shift_from_pmf(&ge.pmf(400).unwrap());
        assert!((from_pmf - 0.3).abs() < 1e-10);
        let from_pmf = dtv_self_shift_from_pmf(&po.pmf(60).unwrap());
        assert!((from_pmf - po.dtv_self_shift()).abs() < 1e-10);

        let point = ComponentSpec::generic(vec![0.0; 4], Pmf::point_mass(0, 4), 1).unwrap();
        assert_eq!(point.dtv_self_shift(), 1.0);
    }

    #[test]
    fn binomial_shift_equals_mode_mass() {
        let bi = ComponentSpec::binomial(7, 0.3, 1).unwrap();
        let pmf = bi.pmf(8).unwrap();
        let mode = pmf.probs().iter().cloned().fold(0.0, f64::max);
        assert_relative_eq!(bi.dtv_self_shift(), mode, max_relative = 1e-12);
        let closed = binomial_mode_shift_term(7, 0.3);
        assert_relative_eq!(closed, mode - 0.3f64.powi(7) / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn closed_form_moments() {
        assert_eq!(ComponentSpec::geometric(0.5, 1).unwrap().moments().unwrap(), (1.0, 1.0, 2.0));
        assert_eq!(ComponentSpec::poisson(3.0, 1).unwrap().moments().unwrap(), (3.0, 0.0, 0.0));
        let (g, gp, gpp) = ComponentSpec::binomial(2, 0.25, 1).unwrap().moments().unwrap();
        assert_relative_eq!(g, 0.5);
        assert_relative_eq!(gp, -0.125);
        assert_relative_eq!(gpp, 0.0625);
    }

    #[test]
    fn binomial_moments_match_series() {
        let bi = ComponentSpec::binomial(2, 0.25, 1).unwrap();
        let a: Vec<f64> = (0..400).map(|m| bi.a_coeff(m)).collect();
        let (g, gp, gpp) = generic_moments(&a).unwrap();
        assert_relative_eq!(g, 0.5, max_relative = 1e-12);
        assert_relative_eq!(gp, -0.125, max_relative = 1e-12);
        assert_relative_eq!(gpp, 0.0625, max_relative = 1e-12);
    }

    #[test]
    fn generic_consistency_is_enforced() {
        let ge = ComponentSpec::geometric(0.4, 1).unwrap();
        let a: Vec<f64> = (0..200).map(|m| ge.a_coeff(m)).collect();
        let pmf = ge.pmf(200).unwrap();
        let generic = ComponentSpec::generic(a.clone(), pmf.clone(), 3).unwrap();
        let (g, gp, gpp) = generic.moments().unwrap();
        let (eg, egp, egpp) = ge.moments().unwrap();
        assert_relative_eq!(g, eg, max_relative = 1e-12);
        assert_relative_eq!(gp, egp, max_relative = 1e-12);
        assert_relative_eq!(gpp, egpp, max_relative = 1e-12);

        let mut bad = a;
        bad[2] += 0.01;
        assert!(matches!(
            ComponentSpec::generic(bad, pmf, 1),
            Err(Error::InconsistentCoefficients { index: 2, .. })
        ));
    }

    #[test]
    fn non_decaying_generic_sequence_is_rejected() {
        let a = vec![0.5; 100];
        assert!(matches!(generic_moments(&a), Err(Error::NonDecayingSeries { .. })));
    }

    #[test]
    fn hypothesis_flags() {
        assert_eq!(
            ComponentSpec::geometric(0.4, 1).unwrap().flags(),
            &[HypothesisFlag::GeometricQAtLeastHalf]
        );
        assert!(ComponentSpec::geometric(0.6, 1).unwrap().flags().is_empty());
        assert_eq!(
            ComponentSpec::binomial(5, 0.6, 1).unwrap().flags(),
            &[HypothesisFlag::BinomialPAtLeastHalf]
        );
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(ComponentSpec::poisson(-1.0, 1).is_err());
        assert!(ComponentSpec::geometric(1.0, 1).is_err());
        assert!(ComponentSpec::geometric(0.5, 0).is_err());
        assert!(ComponentSpec::binomial(0, 0.5, 1).is_err());
    }
}
