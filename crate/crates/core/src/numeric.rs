//! Small numeric helpers shared across modules.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

pub fn ln_choose(n: u64, k: u64) -> f64 {
    statrs::function::factorial::ln_binomial(n, k)
}

pub fn ln_factorial(n: u64) -> f64 {
    statrs::function::factorial::ln_factorial(n)
}

/// Polynomial weights applied to the l-th term of the bound series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Weight {
    /// 1
    Unit,
    /// l
    Linear,
    /// l(l-1)
    Pairs,
    /// l(l-1)/2
    HalfPairs,
    /// l(l-1)(l-2)/6
    Triples,
}

impl Weight {
    #[inline]
    pub fn eval(self, l: usize) -> f64 {
        let x = l as f64;
        match self {
            Weight::Unit => 1.0,
            Weight::Linear => x,
            Weight::Pairs => x * (x - 1.0),
            Weight::HalfPairs => x * (x - 1.0) / 2.0,
            Weight::Triples => x * (x - 1.0) * (x - 2.0) / 6.0,
        }
    }

    pub fn degree(self) -> usize {
        match self {
            Weight::Unit => 0,
            Weight::Linear => 1,
            Weight::Pairs | Weight::HalfPairs => 2,
            Weight::Triples => 3,
        }
    }
}

/// Estimate of `sum_{j>=1} w(last + j) * u_last * ratio^j`, the remainder of a
/// weighted series whose unweighted magnitudes decay geometrically with
/// `ratio`. The weight is expanded in the Newton basis around `last`, so the
/// sum is exact for an exactly geometric sequence.
pub fn geometric_tail(weight: Weight, last: usize, unweighted_last: f64, ratio: f64) -> f64 {
    if unweighted_last == 0.0 {
        return 0.0;
    }
    if !(0.0..1.0).contains(&ratio) {
        return f64::INFINITY;
    }
    let d = weight.degree();
    let vals: Vec<f64> = (0..=d).map(|j| weight.eval(last + j)).collect();
    // forward differences at `last`
    let mut diffs = vals.clone();
    let mut newton = Vec::with_capacity(d + 1);
    for order in 0..=d {
        newton.push(diffs[0]);
        for j in 0..(d - order) {
            diffs[j] = diffs[j + 1] - diffs[j];
        }
    }
    let one_minus = 1.0 - ratio;
    let mut acc = KahanSum::new();
    for (i, c) in newton.iter().enumerate() {
        // sum_{j>=1} C(j,i) r^j
        let s = if i == 0 {
            ratio / one_minus
        } else {
            ratio.powi(i as i32) / one_minus.powi(i as i32 + 1)
        };
        acc.add(c * s);
    }
    unweighted_last * acc.value()
}

/// Rounds to `sig` significant figures and renders without trailing zeros,
/// switching to scientific notation outside [1e-5, 1e6).
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..6).contains(&mag) {
        let decimals = (sig as i32 - 1 - mag).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        trim_zeros(&s)
    } else {
        let s = format!("{:.*e}", sig - 1, x);
        let (mant, exp) = s.split_once('e').expect("scientific format");
        format!("{}e{}", trim_zeros(mant), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_addends() {
        let mut s = KahanSum::new();
        s.add(1.0);
        for _ in 0..10_000 {
            s.add(1e-16);
        }
        assert!((s.value() - (1.0 + 1e-12)).abs() < 1e-20);
    }

    #[test]
    fn tail_is_exact_for_geometric_sequences() {
        let r = 0.9_f64;
        for w in [Weight::Unit, Weight::Linear, Weight::Pairs, Weight::Triples] {
            let last = 50;
            let brute: f64 = kahan_sum((last + 1..20_000).map(|l| w.eval(l) * r.powi(l as i32)));
            let est = geometric_tail(w, last, r.powi(last as i32), r);
            assert!((brute - est).abs() <= 1e-10 * brute, "{w:?}: {brute} vs {est}");
        }
    }

    #[test]
    fn sig_formatting_matches_table_style() {
        assert_eq!(fmt_sig(1.058157, 6), "1.05816");
        assert_eq!(fmt_sig(0.00132440, 6), "0.0013244");
        assert_eq!(fmt_sig(3.534449e-6, 6), "3.53445e-6");
        assert_eq!(fmt_sig(0.0000559635, 6), "0.0000559635");
        assert_eq!(fmt_sig(-2.5, 6), "-2.5");
    }
}
