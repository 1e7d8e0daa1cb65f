//! Waiting times for (k1,k2)-events: `k1` consecutive failures immediately
//! followed by `k2` consecutive successes in Bernoulli(p̄) trials.
//!
//! With `a = q̄^k1 p̄^k2` and `k = k1 + k2`, the number of non-event trials
//! before the n-th event has PGF `(a / (1 - z + a z^k))^n`, and
//! `b_m = [z^m] 1/(1 - z + a z^k)` is the probability of no event in `m`
//! trials.

use rayon::prelude::*;
use serde::Serialize;
use twofloat::TwoFloat;

use crate::bounds::{BoundReport, BoundTerm, Params, Scheme};
use crate::error::{Error, Result};
use crate::matching::NbParams;
use crate::numeric::{geometric_tail, ln_choose, KahanSum, Weight};
use crate::oracle::convolve;
use crate::pmf::Pmf;

/// The (k1,k2) pairs tabulated for both approximations.
pub const TABLE_GRID: [(u32, u32); 21] = [
    (1, 4), (1, 5), (1, 6), (1, 7), (1, 8), (1, 9),
    (2, 4), (2, 5), (2, 6), (2, 7), (2, 8),
    (3, 4), (3, 5), (3, 6), (3, 7),
    (4, 4), (4, 5), (4, 6),
    (5, 4), (5, 5),
    (6, 4),
];
pub const TABLE_P_BARS: [f64; 3] = [0.25, 0.125, 0.0625];
pub const TABLE_NS: [u32; 2] = [50, 100];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct K1K2Config {
    pub k1: u32,
    pub k2: u32,
    pub p_bar: f64,
    pub n: u32,
}

impl K1K2Config {
    pub fn new(k1: u32, k2: u32, p_bar: f64, n: u32) -> Result<Self> {
        if k1 == 0 && k2 == 0 {
            return Err(Error::param("k1,k2", "(0,0) is not an event"));
        }
        if !(p_bar > 0.0 && p_bar < 1.0) {
            return Err(Error::param("p_bar", format!("{p_bar} is not in (0, 1)")));
        }
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        Ok(Self { k1, k2, p_bar, n })
    }

    pub fn k(&self) -> usize {
        (self.k1 + self.k2) as usize
    }

    pub fn a(&self) -> f64 {
        f64::from(self.a_dd())
    }

    fn a_dd(&self) -> TwoFloat {
        let q_bar = TwoFloat::from(1.0) - self.p_bar;
        q_bar.powi(self.k1 as i32) * TwoFloat::from(self.p_bar).powi(self.k2 as i32)
    }

    /// Runs of a single letter overlap with themselves; the renewal
    /// recursions and the PGF above do not hold for them.
    pub fn self_overlapping(&self) -> bool {
        (self.k1 == 0 || self.k2 == 0) && self.k() >= 2
    }

    pub(crate) fn require_renewal(&self) -> Result<()> {
        if self.self_overlapping() {
            Err(Error::OverlappingPattern {
                k1: self.k1,
                k2: self.k2,
            })
        } else {
            Ok(())
        }
    }

    pub fn with_n(&self, n: u32) -> Self {
        Self { n, ..*self }
    }
}

/// `b_0 ..= b_L`, kept in double-double so that `b_l - q b_{l-1}` is
/// accurate when `a` is tiny.
#[derive(Debug, Clone)]
pub struct BSeries {
    b: Vec<TwoFloat>,
    a: TwoFloat,
    k: usize,
}

impl BSeries {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn a(&self) -> f64 {
        f64::from(self.a)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, m: usize) -> f64 {
        f64::from(self.b[m])
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.b.iter().map(|&x| f64::from(x)).collect()
    }

    /// `b_l - q b_{l-1}` for `l >= 1`.
    pub fn diff(&self, l: usize, q: TwoFloat) -> f64 {
        f64::from(self.b[l] - q * self.b[l - 1])
    }

    /// Ratio `b_L / b_{L-1}` at the end of the stored range.
    pub fn end_ratio(&self) -> f64 {
        let n = self.b.len();
        let (last, prev) = (self.get(n - 1), self.get(n - 2));
        if prev > 0.0 {
            (last / prev).max(0.0)
        } else {
            0.0
        }
    }
}

/// `b_0 ..= b_L` by the recursion `b_m = b_{m-1} - a b_{m-k}`, `b_m = 1` for `m < k`.
pub fn b_coeffs(cfg: &K1K2Config, truncation: usize) -> Result<BSeries> {
    cfg.require_renewal()?;
    let k = cfg.k();
    if truncation < k {
        return Err(Error::param("truncation", format!("must be at least k = {k}")));
    }
    let a = cfg.a_dd();
    let mut b = Vec::with_capacity(truncation + 1);
    for m in 0..=truncation {
        let v = if m < k {
            TwoFloat::from(1.0)
        } else {
            b[m - 1] - a * b[m - k]
        };
        b.push(v);
    }
    Ok(BSeries { b, a, k })
}

/// `b_m = sum_l (-1)^l C(m - l(k-1), l) a^l`, evaluated directly.
pub fn b_closed_form(a: f64, k: usize, m: usize) -> f64 {
    let mut acc = KahanSum::new();
    let ln_a = a.ln();
    for l in 0..=(m / k) {
        let top = m - l * (k - 1);
        let mag = (ln_choose(top as u64, l as u64) + l as f64 * ln_a).exp();
        acc.add(if l % 2 == 0 { mag } else { -mag });
    }
    acc.value()
}

/// `P(Ñ(n_trials) = x)`, the number of events in `n_trials` trials, from
/// the boundary values and the renewal recursion
/// `p_{x,n+1} = p_{x,n} + a (p_{x-1,n-k+1} - p_{x,n-k+1})`.
pub fn order_k1k2_pmf(cfg: &K1K2Config, x: usize, n_trials: usize) -> Result<f64> {
    cfg.require_renewal()?;
    let k = cfg.k();
    if x > n_trials / k {
        return Ok(0.0);
    }
    let a = cfg.a();
    // rows[j][n] = p_{j,n}
    let mut rows = vec![vec![0.0; n_trials + 1]; x + 1];
    for (j, row) in rows.iter_mut().enumerate() {
        for (n, v) in row.iter_mut().enumerate().take(k.min(n_trials + 1)) {
            *v = if j == 0 && n < k { 1.0 } else { 0.0 };
        }
    }
    for n in (k - 1)..n_trials {
        for j in 0..=x {
            let back = n + 1 - k;
            let lower = if j == 0 { 0.0 } else { rows[j - 1][back] };
            rows[j][n + 1] = rows[j][n] + a * (lower - rows[j][back]);
        }
    }
    Ok(rows[x][n_trials])
}

/// PMF of a single inter-event gap: `P(T̂ = m) = a b_m`.
pub fn single_waiting_pmf(cfg: &K1K2Config, len: usize) -> Result<Pmf> {
    let b = b_coeffs(cfg, len.max(cfg.k()))?;
    let a = b.a();
    let probs: Vec<f64> = (0..len).map(|m| a * b.get(m)).collect();
    // sum_{m>=len} a b_m = 1 - a sum_{m<len} b_m
    let tail = (1.0 - probs.iter().copied().collect::<KahanSum>().value()).max(0.0);
    Pmf::new(probs, tail)
}

/// PMF of `T́ = T̂_1 + ... + T̂_n` on `0..len`, by binary powering of the
/// single-gap PMF with truncated convolution.
pub fn waiting_pmf(cfg: &K1K2Config, len: usize) -> Result<Pmf> {
    if len == 0 {
        return Err(Error::param("len", "must be at least 1"));
    }
    let base = single_waiting_pmf(cfg, len)?;
    let mut result: Option<Pmf> = None;
    let mut power = base;
    let mut n = cfg.n;
    loop {
        if n & 1 == 1 {
            result = Some(match result {
                None => power.clone(),
                Some(r) => convolve(&r, &power, len),
            });
        }
        n >>= 1;
        if n == 0 {
            break;
        }
        power = convolve(&power, &power, len);
    }
    Ok(result.expect("n >= 1"))
}

/// PMF of `T́` on `0..len` from the PGF-power recursion
/// `(m+1) p_{m+1} = (m+n) p_m - a (m+1-k+nk) p_{m+1-k}`, `p_0 = a^n`.
/// Linear in `len`; used where the support is far too long to convolve.
pub fn waiting_pmf_recursive(cfg: &K1K2Config, len: usize) -> Result<Pmf> {
    cfg.require_renewal()?;
    if len == 0 {
        return Err(Error::param("len", "must be at least 1"));
    }
    let (a, k, n) = (cfg.a(), cfg.k(), cfg.n as f64);
    // values are kept relative to exp(log_scale) to survive a^n underflow
    const RESCALE_AT: f64 = 1e200;
    let mut v = vec![0.0f64; len];
    let mut log_scale = n * a.ln();
    v[0] = 1.0;
    for m in 0..len - 1 {
        let back = if m + 1 >= k {
            let coef = (m + 1) as f64 - k as f64 + n * k as f64;
            a * coef * v[m + 1 - k]
        } else {
            0.0
        };
        let next = ((m as f64 + n) * v[m] - back) / (m + 1) as f64;
        v[m + 1] = next;
        if next.abs() > RESCALE_AT {
            for x in v[..=m + 1].iter_mut() {
                *x /= RESCALE_AT;
            }
            log_scale += RESCALE_AT.ln();
        }
    }
    let probs: Vec<f64> = v
        .iter()
        .map(|&x| if x > 0.0 { (x.ln() + log_scale).exp() } else { 0.0 })
        .collect();
    Pmf::with_implied_tail(probs)
}

/// Which reading of the (k1,k2) bounds to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    /// The bracket without the extra `ka` terms; matches the reference values.
    #[default]
    Tabulated,
    /// The general bracket, including the extra `ka` terms.
    Stated,
}

/// One-parameter matching with `alpha q = n`: `p = a / (1 - k a)`.
pub fn one_param_params(cfg: &K1K2Config) -> Result<NbParams> {
    let (a, k) = (cfg.a(), cfg.k() as f64);
    if (k + 1.0) * a >= 1.0 {
        return Err(Error::InvalidParams(format!("(k+1) a = {} must be below 1", (k + 1.0) * a)));
    }
    let p = a / (1.0 - k * a);
    NbParams::new(cfg.n as f64 / (1.0 - p), p)
}

/// Mean and variance matching.
pub fn two_param_params(cfg: &K1K2Config) -> Result<NbParams> {
    let (a, k) = (cfg.a(), cfg.k() as f64);
    let h = 1.0 - 2.0 * k * a + k * a * a;
    if !(h > 0.0) {
        return Err(Error::InvalidParams(format!("1 - 2ka + ka^2 = {h} must be positive")));
    }
    let p = (1.0 - k * a) * a / (1.0 - (2.0 * k - 1.0) * a);
    let alpha = cfg.n as f64 * (1.0 - k * a).powi(2) / h;
    NbParams::new(alpha, p)
}

// q recomputed in double-double from a so the differences stay accurate
fn q_dd_one(cfg: &K1K2Config) -> TwoFloat {
    let a = cfg.a_dd();
    let k = cfg.k() as f64;
    TwoFloat::from(1.0) - a / (TwoFloat::from(1.0) - a * k)
}

fn q_dd_two(cfg: &K1K2Config) -> TwoFloat {
    let a = cfg.a_dd();
    let k = cfg.k() as f64;
    let one = TwoFloat::from(1.0);
    let p = (one - a * k) * a / (one - a * (2.0 * k - 1.0));
    one - p
}

fn term(label: &str, value: f64) -> BoundTerm {
    BoundTerm {
        label: label.to_string(),
        value,
    }
}

/// One-parameter bound for `T́` (constant order, `alpha q = n`).
pub fn one_param_bound_k1k2(cfg: &K1K2Config, truncation: usize, form: Form) -> Result<BoundReport> {
    let params = one_param_params(cfg)?;
    let b = b_coeffs(cfg, truncation)?;
    let q = q_dd_one(cfg);
    let (a, k) = (cfg.a(), cfg.k() as f64);

    let mut linear = KahanSum::new();
    let mut plain = KahanSum::new();
    for l in 1..=truncation {
        let d = b.diff(l, q).abs();
        linear.add(l as f64 * d);
        plain.add(d);
    }
    let mut terms = vec![
        term("(1-ka) sum l|d_l|", (1.0 - k * a) * linear.value()),
        term("k(k-1)a", k * (k - 1.0) * a),
        term("ka sum |d_l|", k * a * plain.value()),
    ];
    if form == Form::Stated {
        terms.push(term("ka", k * a));
    }
    let ratio = b.end_ratio();
    let last = b.diff(truncation, q).abs();
    let tail = (1.0 - k * a) * geometric_tail(Weight::Linear, truncation, last, ratio)
        + k * a * geometric_tail(Weight::Unit, truncation, last, ratio);
    Ok(BoundReport::new(Scheme::K1K2One, Params::Nb(params), terms, truncation, tail))
}

/// `min(1, sqrt(2/pi) (1/4 + n(1 - a(1+a)/2))^{-1/2})`.
pub fn k1k2_smoothing(cfg: &K1K2Config) -> f64 {
    let a = cfg.a();
    let s = 0.25 + cfg.n as f64 * (1.0 - 0.5 * a * (1.0 + a));
    (std::f64::consts::FRAC_2_PI.sqrt() / s.sqrt()).min(1.0)
}

/// Two-parameter bound for `T́` (order `n^{-1/2}`).
pub fn two_param_bound_k1k2(cfg: &K1K2Config, truncation: usize, form: Form) -> Result<BoundReport> {
    let params = two_param_params(cfg)?;
    let b = b_coeffs(cfg, truncation)?;
    let q = q_dd_two(cfg);
    let (a, ku) = (cfg.a(), cfg.k());
    let k = ku as f64;
    let prefactor = cfg.n as f64 / params.alpha_q() * k1k2_smoothing(cfg);

    let mut main = KahanSum::new();
    for l in 1..=truncation {
        main.add(Weight::HalfPairs.eval(l) * b.diff(l, q).abs());
    }
    // sum_{l=k}^{L} l(l-1)/2 |b_{l-k+1} - q b_{l-k}|
    let mut shifted = KahanSum::new();
    for l in ku..=truncation {
        shifted.add(Weight::HalfPairs.eval(l) * b.diff(l - ku + 1, q).abs());
    }
    let sign = match form {
        Form::Tabulated => -1.0,
        Form::Stated => 1.0,
    };
    let terms = vec![
        term("sum l(l-1)/2 |d_l|", prefactor * main.value()),
        term("k(k-1)(k-2)a/2", prefactor * k * (k - 1.0) * (k - 2.0) / 2.0 * a),
        term("ka sum l(l-1)/2 |d_{l-k+1}|", sign * prefactor * k * a * shifted.value()),
    ];
    let ratio = b.end_ratio();
    let tail = prefactor
        * (geometric_tail(Weight::HalfPairs, truncation, b.diff(truncation, q).abs(), ratio)
            + k * a
                * geometric_tail(
                    Weight::HalfPairs,
                    truncation,
                    b.diff(truncation - ku + 1, q).abs(),
                    ratio,
                ));
    Ok(BoundReport::new(Scheme::K1K2Two, Params::Nb(params), terms, truncation, tail))
}

#[derive(Debug, Clone, Serialize)]
pub struct TableCell {
    pub k1: u32,
    pub k2: u32,
    pub p_bar: f64,
    pub n: u32,
    pub scheme: Scheme,
    pub report: std::result::Result<BoundReport, String>,
}

impl TableCell {
    pub fn bound(&self) -> Option<f64> {
        self.report.as_ref().ok().map(|r| r.bound)
    }
}

fn cell(k1: u32, k2: u32, p_bar: f64, n: u32, scheme: Scheme, truncation: usize, form: Form) -> TableCell {
    let report = K1K2Config::new(k1, k2, p_bar, n)
        .and_then(|cfg| match scheme {
            Scheme::K1K2One => one_param_bound_k1k2(&cfg, truncation, form),
            _ => two_param_bound_k1k2(&cfg, truncation, form),
        })
        .map_err(|e| e.to_string());
    TableCell {
        k1,
        k2,
        p_bar,
        n,
        scheme,
        report,
    }
}

/// One-parameter bounds over `grid` x `p_bars`, row-major. The bound does
/// not depend on `n`; cells carry `n = 1`.
pub fn table1(grid: &[(u32, u32)], p_bars: &[f64], truncation: usize, form: Form) -> Vec<TableCell> {
    let jobs: Vec<(u32, u32, f64)> = grid
        .iter()
        .flat_map(|&(k1, k2)| p_bars.iter().map(move |&p| (k1, k2, p)))
        .collect();
    jobs.par_iter()
        .map(|&(k1, k2, p)| cell(k1, k2, p, 1, Scheme::K1K2One, truncation, form))
        .collect()
}

/// Two-parameter bounds over `grid` x `p_bars` x `ns`, row-major.
pub fn table2(grid: &[(u32, u32)], p_bars: &[f64], ns: &[u32], truncation: usize, form: Form) -> Vec<TableCell> {
    let jobs: Vec<(u32, u32, f64, u32)> = grid
        .iter()
        .flat_map(|&(k1, k2)| {
            p_bars
                .iter()
                .flat_map(move |&p| ns.iter().map(move |&n| (k1, k2, p, n)))
        })
        .collect();
    jobs.par_iter()
        .map(|&(k1, k2, p, n)| cell(k1, k2, p, n, Scheme::K1K2Two, truncation, form))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(k1: u32, k2: u32, p: f64, n: u32) -> K1K2Config {
        K1K2Config::new(k1, k2, p, n).unwrap()
    }

    #[test]
    fn b_first_terms() {
        let c = cfg(1, 4, 0.25, 1);
        assert_eq!(c.a(), 3.0 / 1024.0);
        let b = b_coeffs(&c, 10).unwrap();
        assert_eq!(b.get(0), 1.0);
        assert_eq!(b.get(4), 1.0);
        assert_eq!(b.get(5), 1021.0 / 1024.0);
    }

    #[test]
    fn b_matches_closed_form() {
        let c = cfg(2, 5, 0.25, 1);
        let b = b_coeffs(&c, 200).unwrap();
        for m in 0..=200 {
            assert!((b.get(m) - b_closed_form(c.a(), c.k(), m)).abs() < 1e-12);
        }
    }

    #[test]
    fn b_is_no_event_probability() {
        let c = cfg(1, 2, 0.4, 1);
        let b = b_coeffs(&c, 30).unwrap();
        for m in 0..=30 {
            assert!((b.get(m) - order_k1k2_pmf(&c, 0, m).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn order_pmf_boundary_values() {
        let c = cfg(2, 3, 0.3, 1);
        assert_eq!(order_k1k2_pmf(&c, 0, 4).unwrap(), 1.0);
        assert_relative_eq!(order_k1k2_pmf(&c, 1, 5).unwrap(), c.a(), max_relative = 1e-15);
        assert_relative_eq!(order_k1k2_pmf(&c, 0, 5).unwrap(), 1.0 - c.a(), max_relative = 1e-15);
    }

    #[test]
    fn order_pmf_matches_enumeration() {
        // brute force over all 2^n sequences
        let c = cfg(1, 2, 0.35, 1);
        let n = 12;
        let mut dist = vec![0.0; n + 1];
        for bits in 0u32..(1 << n) {
            let seq: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            let prob: f64 = seq.iter().map(|&s| if s { 0.35 } else { 0.65 }).product();
            let (mut count, mut i) = (0, 0);
            while i + 3 <= n {
                if !seq[i] && seq[i + 1] && seq[i + 2] {
                    count += 1;
                    i += 3;
                } else {
                    i += 1;
                }
            }
            dist[count] += prob;
        }
        for (x, &expected) in dist.iter().enumerate() {
            assert!((order_k1k2_pmf(&c, x, n).unwrap() - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn overlapping_patterns_are_rejected() {
        let c = cfg(3, 0, 0.5, 1);
        assert!(matches!(b_coeffs(&c, 10), Err(Error::OverlappingPattern { .. })));
        assert!(b_coeffs(&cfg(1, 0, 0.5, 1), 10).is_ok());
    }

    #[test]
    fn waiting_pmf_small_values() {
        let c = cfg(1, 4, 0.25, 1);
        let w = waiting_pmf(&c, 50).unwrap();
        assert_eq!(w.get(0), c.a());
        let w2 = waiting_pmf(&c.with_n(2), 50).unwrap();
        assert_relative_eq!(w2.get(0), c.a() * c.a(), max_relative = 1e-15);
        assert!((w2.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn recursive_and_convolution_paths_agree() {
        let c = cfg(1, 2, 0.3, 7);
        let conv = waiting_pmf(&c, 400).unwrap();
        let rec = waiting_pmf_recursive(&c, 400).unwrap();
        for m in 0..400 {
            assert!((conv.get(m) - rec.get(m)).abs() < 1e-13, "m={m}");
        }
        assert!((conv.tail_mass() - rec.tail_mass()).abs() < 1e-12);
    }

    #[test]
    fn recursion_survives_underflow_of_first_term() {
        let c = cfg(2, 5, 0.25, 100);
        assert_eq!(c.a().powi(100), 0.0);
        let mean = 100.0 * (1.0 - c.k() as f64 * c.a()) / c.a();
        let rec = waiting_pmf_recursive(&c, (3.0 * mean) as usize).unwrap();
        assert!(rec.tail_mass() < 1e-12);
        assert_relative_eq!(rec.truncated_mean(), mean, max_relative = 1e-8);
    }

    #[test]
    fn reference_cells() {
        let c = cfg(1, 4, 0.25, 1);
        let r = one_param_bound_k1k2(&c, 3000, Form::Tabulated).unwrap();
        assert_relative_eq!(r.bound, 1.05816, max_relative = 1e-3);
        let c = cfg(3, 5, 0.125, 50);
        let r = two_param_bound_k1k2(&c, 3000, Form::Tabulated).unwrap();
        assert_relative_eq!(r.bound, 0.000631458, max_relative = 1e-3);
        let stated = two_param_bound_k1k2(&c, 3000, Form::Stated).unwrap();
        assert!(stated.bound > r.bound);
    }

    #[test]
    fn hypothesis_failures() {
        // (k+1)a >= 1 needs a large a
        let c = cfg(1, 1, 0.5, 1);
        assert!(one_param_bound_k1k2(&c, 100, Form::Tabulated).is_ok());
        let c = cfg(0, 1, 0.9, 1);
        assert!(matches!(one_param_params(&c), Err(Error::InvalidParams(_))));
    }
}
