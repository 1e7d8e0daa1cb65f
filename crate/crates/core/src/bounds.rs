//! Total-variation bounds: series-evaluated theorems, their closed-form
//! corollaries, the smoothing estimates and the perturbation lemma.

use std::f64::consts::FRAC_2_PI;

use serde::Serialize;

use crate::dist::{ComponentKind, ComponentSpec, HypothesisFlag};
use crate::error::{Error, Result};
use crate::matching::{check_params, NbParams, ThreeParamFit};
use crate::moments::aggregate;
use crate::numeric::{geometric_tail, KahanSum, Weight};

/// Default series truncation.
pub const DEFAULT_TRUNCATION: usize = 3000;

/// Relative tolerance used when checking that supplied parameters were
/// matched to the mixture.
pub const PARAMS_TOLERANCE: f64 = 1e-8;

/// A tail estimate above this fraction of the bound raises
/// [`HypothesisFlag::TruncationDominated`].
pub const TAIL_FLAG_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    OneParam,
    TwoParam,
    ThreeParam,
    K1K2One,
    K1K2Two,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::OneParam => "one-param",
            Scheme::TwoParam => "two-param",
            Scheme::ThreeParam => "three-param",
            Scheme::K1K2One => "k1k2-one",
            Scheme::K1K2Two => "k1k2-two",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Nb(NbParams),
    Three(ThreeParamFit),
}

impl Params {
    pub fn nb(&self) -> &NbParams {
        match self {
            Params::Nb(p) => p,
            Params::Three(f) => &f.nb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundTerm {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub scheme: Scheme,
    pub params: Params,
    pub bound: f64,
    /// Additive pieces of `bound`.
    pub terms: Vec<BoundTerm>,
    pub truncation: usize,
    /// Estimated contribution of the neglected series remainder, in the
    /// units of `bound`. Never included in `bound`.
    pub tail_estimate: f64,
    pub hypothesis_flags: Vec<HypothesisFlag>,
}

impl BoundReport {
    pub(crate) fn new(scheme: Scheme, params: Params, terms: Vec<BoundTerm>, truncation: usize, tail_estimate: f64) -> Self {
        let bound = terms.iter().map(|t| t.value).collect::<KahanSum>().value();
        let mut report = Self {
            scheme,
            params,
            bound,
            terms,
            truncation,
            tail_estimate,
            hypothesis_flags: Vec::new(),
        };
        if !(tail_estimate <= TAIL_FLAG_FRACTION * bound) && tail_estimate > 0.0 {
            report.flag(HypothesisFlag::TruncationDominated);
        }
        report
    }

    pub(crate) fn flag(&mut self, f: HypothesisFlag) {
        if !self.hypothesis_flags.contains(&f) {
            self.hypothesis_flags.push(f);
        }
    }

    fn inherit_flags(mut self, mixture: &[ComponentSpec]) -> Self {
        for spec in mixture {
            for &f in spec.flags() {
                self.flag(f);
            }
        }
        self
    }

    pub fn flag_names(&self) -> Vec<&'static str> {
        self.hypothesis_flags.iter().map(|f| f.as_str()).collect()
    }
}

/// A truncated weighted series with its remainder estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesSum {
    pub value: f64,
    pub tail_estimate: f64,
    /// Contribution of each component, count included.
    pub per_component: Vec<f64>,
}

/// Common ratio of `|a_{l+1} - q a_l|` in `l` for the closed-form kinds.
fn decay_ratio(spec: &ComponentSpec) -> Option<f64> {
    match spec.kind() {
        ComponentKind::Geometric { p } => Some(1.0 - p),
        ComponentKind::Binomial { p, .. } => Some(p / (1.0 - p)),
        _ => None,
    }
}

/// `sum_i count_i sum_{l=1}^{L} w(l) |a_{i,l+1} - q a_{i,l}|`.
pub fn series_term(mixture: &[ComponentSpec], q: f64, weight: Weight, truncation: usize) -> Result<SeriesSum> {
    if truncation == 0 {
        return Err(Error::param("truncation", "must be at least 1"));
    }
    let mut total = KahanSum::new();
    let mut tail = KahanSum::new();
    let mut per_component = Vec::with_capacity(mixture.len());
    for spec in mixture {
        let count = spec.count() as f64;
        let end = match spec.a_support() {
            Some(s) => s.min(truncation),
            None => truncation,
        };
        let mut acc = KahanSum::new();
        for l in 1..=end {
            acc.add(weight.eval(l) * spec.a_diff(l, q).abs());
        }
        let component_tail = match (decay_ratio(spec), spec.kind()) {
            (Some(ratio), _) => {
                if ratio >= 1.0 {
                    return Err(Error::NonDecayingSeries { truncation, ratio });
                }
                geometric_tail(weight, end, spec.a_diff(end, q).abs(), ratio)
            }
            (None, ComponentKind::Generic { a, .. }) => {
                // the series ends with the stored coefficients; when it was
                // cut short, extrapolate from the last two terms
                if a.len() <= truncation {
                    0.0
                } else {
                    let last = spec.a_diff(end, q).abs();
                    let prev = spec.a_diff(end - 1, q).abs();
                    if last == 0.0 {
                        0.0
                    } else {
                        let ratio = if prev > 0.0 { last / prev } else { f64::INFINITY };
                        if ratio >= 1.0 {
                            return Err(Error::NonDecayingSeries { truncation, ratio });
                        }
                        geometric_tail(weight, end, last, ratio)
                    }
                }
            }
            _ => 0.0,
        };
        let v = count * acc.value();
        per_component.push(v);
        total.add(v);
        tail.add(count * component_tail);
    }
    Ok(SeriesSum {
        value: total.value(),
        tail_estimate: tail.value(),
        per_component,
    })
}

fn smoothing(sum: f64) -> f64 {
    (FRAC_2_PI.sqrt() / (0.25 + sum).sqrt()).min(1.0)
}

/// Smoothing estimate for `d_TV(Y, Y+1)`, capped at 1.
pub fn mattner_roos(mixture: &[ComponentSpec]) -> f64 {
    let s: f64 = mixture
        .iter()
        .map(|c| c.count() as f64 * (1.0 - c.dtv_self_shift()))
        .collect::<KahanSum>()
        .value();
    smoothing(s)
}

/// `Psi = sum_i min(1/2, 1 - d_TV(X_i, X_i + 1))`.
pub fn psi(mixture: &[ComponentSpec]) -> f64 {
    mixture
        .iter()
        .map(|c| c.count() as f64 * (1.0 - c.dtv_self_shift()).min(0.5))
        .collect::<KahanSum>()
        .value()
}

fn component_terms(mixture: &[ComponentSpec], series: &SeriesSum, scale: f64) -> Vec<BoundTerm> {
    mixture
        .iter()
        .zip(&series.per_component)
        .map(|(spec, v)| BoundTerm {
            label: spec.label(),
            value: scale * v,
        })
        .collect()
}

pub fn theorem_one(mixture: &[ComponentSpec], params: &NbParams, truncation: usize) -> Result<BoundReport> {
    let m = aggregate(mixture)?;
    check_params(&m, params, false, PARAMS_TOLERANCE)?;
    let series = series_term(mixture, params.q, Weight::Linear, truncation)?;
    let scale = 1.0 / params.alpha_q();
    let report = BoundReport::new(
        Scheme::OneParam,
        Params::Nb(*params),
        component_terms(mixture, &series, scale),
        truncation,
        scale * series.tail_estimate,
    );
    Ok(report.inherit_flags(mixture))
}

pub fn theorem_two(mixture: &[ComponentSpec], params: &NbParams, truncation: usize) -> Result<BoundReport> {
    let m = aggregate(mixture)?;
    if !m.overdispersed() {
        return Err(Error::OverdispersedRequired {
            mu: m.mu,
            sigma2: m.sigma2,
        });
    }
    check_params(&m, params, true, PARAMS_TOLERANCE)?;
    let series = series_term(mixture, params.q, Weight::Pairs, truncation)?;
    let scale = mattner_roos(mixture) / params.alpha_q();
    let report = BoundReport::new(
        Scheme::TwoParam,
        Params::Nb(*params),
        component_terms(mixture, &series, scale),
        truncation,
        scale * series.tail_estimate,
    );
    Ok(report.inherit_flags(mixture))
}

fn check_three(mixture: &[ComponentSpec], fit: &ThreeParamFit) -> Result<f64> {
    let m = aggregate(mixture)?;
    if !m.overdispersed() {
        return Err(Error::OverdispersedRequired {
            mu: m.mu,
            sigma2: m.sigma2,
        });
    }
    let x = fit.q_hat / fit.p_hat;
    let fitted = fit.nb.mean() + x;
    if (fitted - m.mu).abs() > PARAMS_TOLERANCE * m.mu {
        return Err(Error::ParamsMismatch(format!("fitted mean {fitted} but mu = {}", m.mu)));
    }
    let denominator = fit.denominator();
    if !(denominator > 0.0) {
        return Err(Error::PerturbationTooLarge { denominator });
    }
    Ok(denominator)
}

/// `|q_hat - q| q_hat^3 / p_hat^4`.
fn geometric_perturbation(fit: &ThreeParamFit) -> f64 {
    (fit.q_hat - fit.nb.q).abs() * fit.q_hat.powi(3) / fit.p_hat.powi(4)
}

pub fn theorem_three(mixture: &[ComponentSpec], fit: &ThreeParamFit, truncation: usize) -> Result<BoundReport> {
    let denominator = check_three(mixture, fit)?;
    let series = series_term(mixture, fit.nb.q, Weight::Triples, truncation)?;
    let scale = 16.0 / (psi(mixture) * denominator);
    let mut terms = component_terms(mixture, &series, scale);
    terms.push(BoundTerm {
        label: "geometric part".into(),
        value: scale * geometric_perturbation(fit),
    });
    let report = BoundReport::new(
        Scheme::ThreeParam,
        Params::Three(*fit),
        terms,
        truncation,
        scale * series.tail_estimate,
    );
    Ok(report.inherit_flags(mixture))
}

/// Kinds present in a mixture, for selecting a closed form.
#[derive(Debug, Clone, Copy, Default)]
struct Composition {
    geometric: bool,
    poisson: bool,
    binomial: bool,
}

fn composition(mixture: &[ComponentSpec]) -> Result<Composition> {
    let mut c = Composition::default();
    for spec in mixture {
        match spec.kind() {
            ComponentKind::Geometric { .. } => c.geometric = true,
            ComponentKind::Poisson { .. } => c.poisson = true,
            ComponentKind::Binomial { .. } => c.binomial = true,
            ComponentKind::Generic { .. } => {
                return Err(Error::UnsupportedComposition(
                    "generic components have no closed form".into(),
                ))
            }
        }
    }
    if c.geometric && c.poisson && c.binomial {
        return Err(Error::UnsupportedComposition(
            "geometric, Poisson and binomial together".into(),
        ));
    }
    Ok(c)
}

/// Closed forms of `sum_{l>=1} w(l) r^l` for `0 <= r < 1`.
fn weighted_geometric_sum(weight: Weight, r: f64) -> f64 {
    let s = 1.0 - r;
    match weight {
        Weight::Unit => r / s,
        Weight::Linear => r / (s * s),
        Weight::Pairs => 2.0 * r * r / s.powi(3),
        Weight::HalfPairs => r * r / s.powi(3),
        Weight::Triples => r.powi(3) / s.powi(4),
    }
}

fn check_binomial(n: u32, p: f64) -> Result<(f64, f64)> {
    let r = p / (1.0 - p);
    if r >= 1.0 {
        return Err(Error::NonDecayingSeries {
            truncation: usize::MAX,
            ratio: r,
        });
    }
    Ok((n as f64, r))
}

/// Adds the binomial side-condition flag when `sum n p~^2 >= sum q^2/p^2`.
fn side_condition(report: &mut BoundReport, mixture: &[ComponentSpec]) {
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for spec in mixture {
        let c = spec.count() as f64;
        match spec.kind() {
            ComponentKind::Binomial { n, p } => lhs += c * *n as f64 * p * p,
            ComponentKind::Geometric { p } => rhs += c * ((1.0 - p) / p).powi(2),
            _ => {}
        }
    }
    if lhs >= rhs {
        report.flag(HypothesisFlag::BinomialSideCondition);
    }
}

fn labeled(label: String, value: f64) -> BoundTerm {
    BoundTerm { label, value }
}

pub fn corollary_one(mixture: &[ComponentSpec], params: &NbParams) -> Result<BoundReport> {
    composition(mixture)?;
    let m = aggregate(mixture)?;
    check_params(&m, params, false, PARAMS_TOLERANCE)?;
    let (p, q) = (params.p, params.q);
    let scale = 1.0 / params.alpha_q();
    let mut terms = Vec::with_capacity(mixture.len());
    for spec in mixture {
        let c = spec.count() as f64;
        let v = match *spec.kind() {
            ComponentKind::Geometric { p: pi } => c * (p - pi).abs() * (1.0 - pi) / (pi * pi),
            ComponentKind::Poisson { lambda } => c * q * lambda,
            ComponentKind::Binomial { n, p: pt } => {
                let (n, r) = check_binomial(n, pt)?;
                let qt = 1.0 - pt;
                c * n * (r + q) * pt * qt / (1.0 - 2.0 * pt).powi(2)
            }
            ComponentKind::Generic { .. } => unreachable!("rejected by composition"),
        };
        terms.push(labeled(spec.label(), scale * v));
    }
    Ok(BoundReport::new(Scheme::OneParam, Params::Nb(*params), terms, 0, 0.0).inherit_flags(mixture))
}

/// `1 - d_TV(X, X+1)` from the closed forms quoted with the corollaries.
fn smoothness_complement(spec: &ComponentSpec) -> f64 {
    match *spec.kind() {
        ComponentKind::Geometric { p } => 1.0 - p,
        _ => 1.0 - spec.dtv_self_shift(),
    }
}

pub fn corollary_two(mixture: &[ComponentSpec], params: &NbParams) -> Result<BoundReport> {
    let comp = composition(mixture)?;
    if comp.poisson && comp.binomial {
        return Err(Error::UnsupportedComposition(
            "Poisson with binomial is underdispersed".into(),
        ));
    }
    let m = aggregate(mixture)?;
    if !m.overdispersed() {
        return Err(Error::OverdispersedRequired {
            mu: m.mu,
            sigma2: m.sigma2,
        });
    }
    check_params(&m, params, true, PARAMS_TOLERANCE)?;
    let (p, q) = (params.p, params.q);
    let smooth = smoothing(
        mixture
            .iter()
            .map(|s| s.count() as f64 * smoothness_complement(s))
            .collect::<KahanSum>()
            .value(),
    );
    let mut terms = Vec::with_capacity(mixture.len());
    let geometric_only = !comp.poisson && !comp.binomial;
    for spec in mixture {
        let c = spec.count() as f64;
        let v = match *spec.kind() {
            ComponentKind::Geometric { p: pi } => {
                let qi = 1.0 - pi;
                if geometric_only {
                    (2.0 / m.mu) * smooth * c * (1.0 / p - 1.0 / pi).abs() * (qi / pi).powi(2)
                } else {
                    (2.0 / params.alpha_q()) * smooth * c * (p - pi).abs() * qi * qi / pi.powi(3)
                }
            }
            ComponentKind::Poisson { .. } => 0.0,
            ComponentKind::Binomial { n, p: pt } => {
                let (n, r) = check_binomial(n, pt)?;
                let qt = 1.0 - pt;
                smooth / params.alpha_q() * c * n * (r + q) * 2.0 * pt * pt * qt / (1.0 - 2.0 * pt).powi(3)
            }
            ComponentKind::Generic { .. } => unreachable!("rejected by composition"),
        };
        terms.push(labeled(spec.label(), v));
    }
    let mut report = BoundReport::new(Scheme::TwoParam, Params::Nb(*params), terms, 0, 0.0).inherit_flags(mixture);
    if comp.binomial {
        side_condition(&mut report, mixture);
    }
    Ok(report)
}

pub fn corollary_three(mixture: &[ComponentSpec], fit: &ThreeParamFit) -> Result<BoundReport> {
    let comp = composition(mixture)?;
    if comp.poisson && comp.binomial {
        return Err(Error::UnsupportedComposition(
            "Poisson with binomial is underdispersed".into(),
        ));
    }
    let denominator = check_three(mixture, fit)?;
    let (p, q) = (fit.nb.p, fit.nb.q);
    // Psi coincides with sum q_i for geometric mixtures with q_i < 1/2
    let smooth = psi(mixture);
    let scale = 16.0 / (smooth * denominator);
    let mut terms = Vec::with_capacity(mixture.len() + 1);
    for spec in mixture {
        let c = spec.count() as f64;
        let v = match *spec.kind() {
            ComponentKind::Geometric { p: pi } => {
                c * p * (1.0 / p - 1.0 / pi).abs() * ((1.0 - pi) / pi).powi(3)
            }
            ComponentKind::Poisson { .. } => 0.0,
            ComponentKind::Binomial { n, p: pt } => {
                let (n, r) = check_binomial(n, pt)?;
                let qt = 1.0 - pt;
                c * n * (r + q) * pt.powi(3) * qt / (1.0 - 2.0 * pt).powi(4)
            }
            ComponentKind::Generic { .. } => unreachable!("rejected by composition"),
        };
        terms.push(labeled(spec.label(), scale * v));
    }
    let hat = p * (1.0 / p - 1.0 / fit.p_hat).abs() * (fit.q_hat / fit.p_hat).powi(3);
    terms.push(labeled("geometric part".into(), scale * hat));
    let mut report = BoundReport::new(Scheme::ThreeParam, Params::Three(*fit), terms, 0, 0.0).inherit_flags(mixture);
    if comp.binomial {
        side_condition(&mut report, mixture);
    }
    Ok(report)
}

/// Closed form of the theorem series for a single closed-form component,
/// used to cross-check [`series_term`].
pub fn component_series_closed_form(spec: &ComponentSpec, q: f64, weight: Weight) -> Result<f64> {
    let c = spec.count() as f64;
    Ok(match *spec.kind() {
        ComponentKind::Geometric { p } => {
            let qi = 1.0 - p;
            c * (qi - q).abs() * weighted_geometric_sum(weight, qi)
        }
        ComponentKind::Poisson { lambda } => c * weight.eval(1) * q * lambda,
        ComponentKind::Binomial { n, p } => {
            let (n, r) = check_binomial(n, p)?;
            c * n * (r + q) * weighted_geometric_sum(weight, r)
        }
        ComponentKind::Generic { .. } => {
            return Err(Error::UnsupportedComposition("generic components have no closed form".into()))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationEstimate {
    pub delta1: f64,
    pub delta2: f64,
    pub alpha_q: f64,
}

/// `delta2 / (alpha q - delta1)`.
pub fn perturbation_bound(e: &PerturbationEstimate) -> Result<f64> {
    if e.delta1 < 0.0 || e.delta2 < 0.0 {
        return Err(Error::param("delta", "perturbation norms must be nonnegative"));
    }
    let denominator = e.alpha_q - e.delta1;
    if !(denominator > 0.0) {
        return Err(Error::PerturbationTooLarge { denominator });
    }
    Ok(e.delta2 / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{match_one_param, match_three_param, match_two_param, OneParamMode};
    use approx::assert_relative_eq;

    fn ge(p: f64, c: u32) -> ComponentSpec {
        ComponentSpec::geometric(p, c).unwrap()
    }

    #[test]
    fn series_vanishes_at_matched_q() {
        for w in [Weight::Linear, Weight::Pairs, Weight::Triples] {
            let s = series_term(&[ge(0.4, 3)], 0.6, w, 3000).unwrap();
            assert_eq!(s.value, 0.0);
        }
    }

    #[test]
    fn series_geometric_and_poisson_closed_forms() {
        let (pi, q) = (0.3, 0.5);
        let s = series_term(&[ge(pi, 1)], q, Weight::Linear, 3000).unwrap();
        let qi = 1.0 - pi;
        assert_relative_eq!(s.value, (qi - q).abs() * qi / (pi * pi), max_relative = 1e-12);

        let po = ComponentSpec::poisson(2.5, 1).unwrap();
        let s = series_term(&[po], q, Weight::Linear, 3000).unwrap();
        assert_relative_eq!(s.value, q * 2.5, max_relative = 1e-15);
        assert_eq!(s.tail_estimate, 0.0);
    }

    #[test]
    fn series_tail_accounts_for_truncation() {
        let mix = [ge(0.1, 2), ComponentSpec::binomial(4, 0.3, 1).unwrap()];
        let short = series_term(&mix, 0.4, Weight::Pairs, 40).unwrap();
        let long = series_term(&mix, 0.4, Weight::Pairs, 4000).unwrap();
        assert_relative_eq!(short.value + short.tail_estimate, long.value, max_relative = 1e-10);
    }

    #[test]
    fn binomial_above_half_does_not_decay() {
        let mix = [ComponentSpec::binomial(4, 0.6, 1).unwrap()];
        assert!(matches!(
            series_term(&mix, 0.4, Weight::Linear, 100),
            Err(Error::NonDecayingSeries { .. })
        ));
    }

    #[test]
    fn mattner_roos_values() {
        assert_relative_eq!(mattner_roos(&[ge(0.5, 2)]), 0.713649, max_relative = 1e-6);
        let point = ComponentSpec::generic(vec![0.0; 3], crate::pmf::Pmf::point_mass(0, 3), 1).unwrap();
        assert_eq!(mattner_roos(&[point]), 1.0);
    }

    #[test]
    fn psi_values() {
        assert_relative_eq!(psi(&[ge(0.6, 10)]), 4.0, max_relative = 1e-12);
        assert_relative_eq!(psi(&[ge(0.3, 4)]), 2.0, max_relative = 1e-12);
        assert_eq!(psi(&[ComponentSpec::poisson(1.0, 1).unwrap()]), 0.5);
    }

    #[test]
    fn iid_geometric_bounds_vanish() {
        let mix = [ge(0.6, 10)];
        let m = aggregate(&mix).unwrap();
        let one = match_one_param(&m, OneParamMode::FixedP(0.6)).unwrap();
        assert!(theorem_one(&mix, &one, 3000).unwrap().bound <= 1e-12);
        let two = match_two_param(&m).unwrap();
        assert!(theorem_two(&mix, &two, 3000).unwrap().bound <= 1e-12);
        let three = match_three_param(&m).unwrap();
        assert!(theorem_three(&mix, &three, 3000).unwrap().bound <= 1e-12);
    }

    #[test]
    fn poisson_fixed_p_bound_is_q_over_p() {
        let mix = [ComponentSpec::poisson(2.0, 1).unwrap()];
        let m = aggregate(&mix).unwrap();
        let params = match_one_param(&m, OneParamMode::FixedP(0.7)).unwrap();
        let r = theorem_one(&mix, &params, 3000).unwrap();
        assert_relative_eq!(r.bound, 0.3 / 0.7, max_relative = 1e-12);
    }

    #[test]
    fn bound_when_differences_are_nonnegative() {
        // q_i >= q for every component, so every a_{l+1} - q a_l >= 0 and the
        // linear series telescopes to sigma^2/mu - 1/p
        let mix = [ge(0.3, 2), ge(0.35, 3)];
        let m = aggregate(&mix).unwrap();
        let params = match_one_param(&m, OneParamMode::FixedP(0.9)).unwrap();
        let r = theorem_one(&mix, &params, 3000).unwrap();
        assert_relative_eq!(r.bound, m.sigma2 / m.mu - 1.0 / params.p, max_relative = 1e-10);
    }

    #[test]
    fn corollary_one_geometric_substitution() {
        let mix = [ge(0.45, 1), ge(0.35, 1)];
        let m = aggregate(&mix).unwrap();
        let params = match_one_param(&m, OneParamMode::FixedAlpha(2.0)).unwrap();
        let p = 2.0 / (2.0 + m.mu);
        let expected = ((p - 0.45f64).abs() * 0.55 / 0.45f64.powi(2) + (p - 0.35f64).abs() * 0.65 / 0.35f64.powi(2))
            / (2.0 * (1.0 - p));
        let c = corollary_one(&mix, &params).unwrap();
        assert_relative_eq!(c.bound, expected, max_relative = 1e-12);
        let t = theorem_one(&mix, &params, 3000).unwrap();
        assert!((c.bound - t.bound).abs() <= 1e-10);
    }

    #[test]
    fn corollary_one_poisson_binomial() {
        let mix = [ComponentSpec::poisson(1.0, 1).unwrap(), ComponentSpec::binomial(2, 0.2, 1).unwrap()];
        let m = aggregate(&mix).unwrap();
        let params = match_one_param(&m, OneParamMode::FixedP(0.5)).unwrap();
        let q = params.q;
        let expected = (q + 2.0 * (0.25 + q) * 0.2 * 0.8 / 0.36) / params.alpha_q();
        let c = corollary_one(&mix, &params).unwrap();
        assert_relative_eq!(c.bound, expected, max_relative = 1e-12);
        let t = theorem_one(&mix, &params, 3000).unwrap();
        assert!((c.bound - t.bound).abs() <= 1e-10);
    }

    #[test]
    fn corollaries_two_and_three_match_theorems() {
        let mix = [ge(0.45, 25), ge(0.35, 25)];
        let m = aggregate(&mix).unwrap();
        let two = match_two_param(&m).unwrap();
        let (c, t) = (corollary_two(&mix, &two).unwrap(), theorem_two(&mix, &two, 3000).unwrap());
        assert!((c.bound - t.bound).abs() <= 1e-10, "{} vs {}", c.bound, t.bound);
        let fit = match_three_param(&m).unwrap();
        let (c, t) = (corollary_three(&mix, &fit).unwrap(), theorem_three(&mix, &fit, 3000).unwrap());
        assert!((c.bound - t.bound).abs() <= 1e-10, "{} vs {}", c.bound, t.bound);
    }

    #[test]
    fn unsupported_compositions() {
        let g = ComponentSpec::generic(vec![0.0; 3], crate::pmf::Pmf::point_mass(0, 3), 1).unwrap();
        let params = NbParams::new(1.0, 0.5).unwrap();
        assert!(matches!(corollary_one(&[g], &params), Err(Error::UnsupportedComposition(_))));
    }

    #[test]
    fn perturbation_lemma() {
        let e = |d1, d2| PerturbationEstimate {
            delta1: d1,
            delta2: d2,
            alpha_q: 2.0,
        };
        assert_eq!(perturbation_bound(&e(0.5, 0.0)).unwrap(), 0.0);
        assert_eq!(perturbation_bound(&e(0.0, 2.0)).unwrap(), 1.0);
        assert!(matches!(perturbation_bound(&e(2.0, 1.0)), Err(Error::PerturbationTooLarge { .. })));
    }

    #[test]
    fn terms_sum_to_bound() {
        let mix = [ge(0.45, 3), ge(0.35, 4), ComponentSpec::poisson(0.7, 2).unwrap()];
        let m = aggregate(&mix).unwrap();
        let two = match_two_param(&m).unwrap();
        let r = theorem_two(&mix, &two, 3000).unwrap();
        let s: f64 = r.terms.iter().map(|t| t.value).sum();
        assert!((s - r.bound).abs() <= 1e-12);
    }
}
