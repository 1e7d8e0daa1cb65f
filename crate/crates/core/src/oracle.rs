//! Ground truth: exact truncated PMFs, total-variation distance, Monte Carlo
//! simulation of (k1,k2)-events and the domination check `TV <= bound`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{BoundReport, Params, DEFAULT_TRUNCATION};
use crate::dist::ComponentSpec;
use crate::error::{Error, Result};
use crate::k1k2::{one_param_bound_k1k2, two_param_bound_k1k2, waiting_pmf_recursive, Form, K1K2Config};
use crate::matching::{NbParams, ThreeParamFit};
use crate::moments::aggregate;
use crate::numeric::KahanSum;
use crate::pmf::Pmf;

/// Truncated convolution on `0..len`. Mass that lands at or beyond `len`,
/// or involves either tail, goes to the tail.
pub fn convolve(x: &Pmf, y: &Pmf, len: usize) -> Pmf {
    let (xs, ys) = (x.probs(), y.probs());
    let mut out = vec![0.0; len];
    for (i, &xi) in xs.iter().enumerate().take(len) {
        if xi == 0.0 {
            continue;
        }
        let upto = ys.len().min(len - i);
        for (o, &yj) in out[i..i + upto].iter_mut().zip(&ys[..upto]) {
            *o += xi * yj;
        }
    }
    let (tx, ty) = (x.tail_mass(), y.tail_mass());
    let kept: f64 = out.iter().copied().collect::<KahanSum>().value();
    // head x head mass that was pushed past len
    let pushed = (x.head_mass() * y.head_mass() - kept).max(0.0);
    let tail = tx + ty - tx * ty + pushed;
    Pmf::from_parts(out, tail.min(1.0)).expect("convolution of valid PMFs")
}

/// `count`-fold convolution power by repeated squaring.
pub fn convolve_power(x: &Pmf, count: u32, len: usize) -> Pmf {
    let mut result = Pmf::point_mass(0, len);
    let mut power = x.truncate(len);
    let mut c = count;
    while c > 0 {
        if c & 1 == 1 {
            result = convolve(&result, &power, len);
        }
        c >>= 1;
        if c > 0 {
            power = convolve(&power, &power, len);
        }
    }
    result
}

/// PMF of `Y = sum X_i` on `0..len`.
pub fn mixture_pmf(mixture: &[ComponentSpec], len: usize) -> Result<Pmf> {
    if mixture.is_empty() {
        return Err(Error::EmptyMixture);
    }
    let mut acc = Pmf::point_mass(0, len);
    for spec in mixture {
        let single = spec.pmf(len)?;
        acc = convolve(&acc, &convolve_power(&single, spec.count(), len), len);
    }
    Ok(acc)
}

/// `NB(alpha, p)` on `0..len`, from `P(m+1) = P(m) q (alpha+m)/(m+1)` carried
/// in logs so that `p^alpha` may underflow without losing the body.
pub fn nb_pmf(params: &NbParams, len: usize) -> Pmf {
    let NbParams { alpha, p, q } = *params;
    let ln_q = q.ln();
    let mut ln_p = KahanSum::new();
    ln_p.add(alpha * p.ln());
    let mut probs = Vec::with_capacity(len);
    for m in 0..len {
        probs.push(ln_p.value().exp());
        let mf = m as f64;
        ln_p.add(ln_q + (alpha + mf).ln() - (mf + 1.0).ln());
    }
    let head: f64 = probs.iter().copied().collect::<KahanSum>().value();
    Pmf::from_parts(probs, (1.0 - head).max(0.0)).expect("NB probabilities are nonnegative")
}

/// `Ge(p_hat)` on `0..len`; `p_hat = 1` is the point mass at 0.
pub fn geometric_pmf(p_hat: f64, len: usize) -> Pmf {
    if p_hat >= 1.0 {
        return Pmf::point_mass(0, len);
    }
    let q = 1.0 - p_hat;
    let probs: Vec<f64> = (0..len).map(|m| p_hat * q.powi(m as i32)).collect();
    Pmf::from_parts(probs, q.powi(len as i32)).expect("geometric probabilities")
}

/// `V = Z + W` with `Z ~ NB(alpha, p)` and `W ~ Ge(p_hat)`.
pub fn nb_ge_pmf(fit: &ThreeParamFit, len: usize) -> Pmf {
    convolve(&nb_pmf(&fit.nb, len), &geometric_pmf(fit.p_hat, len), len)
}

/// The approximating law carried by a bound report.
pub fn approximant_pmf(params: &Params, len: usize) -> Pmf {
    match params {
        Params::Nb(nb) => nb_pmf(nb, len),
        Params::Three(fit) => nb_ge_pmf(fit, len),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TvDistance {
    /// `1/2 sum_{m<L} |x_m - y_m|`, a lower bound on the true distance.
    pub value: f64,
    /// The true distance is at most `value + error`.
    pub error: f64,
}

pub fn tv_distance(x: &Pmf, y: &Pmf) -> TvDistance {
    let n = x.len().max(y.len());
    let value = 0.5
        * (0..n)
            .map(|m| (x.get(m) - y.get(m)).abs())
            .collect::<KahanSum>()
            .value();
    TvDistance {
        value,
        error: 0.5 * (x.tail_mass() + y.tail_mass()),
    }
}

/// Number of trials per independently seeded chunk. Fixed so that results
/// do not depend on the thread count.
pub const SIMULATION_CHUNK: u64 = 10_000;

#[derive(Debug, Clone, Serialize)]
pub struct SimulationRun {
    pub cfg: K1K2Config,
    pub seed: u64,
    pub trials: u64,
    /// Raw histogram of `T́`.
    pub counts: Vec<u64>,
    pub empirical: Pmf,
    /// `sqrt(p̂(1 - p̂)/trials)` per bin.
    pub std_errors: Vec<f64>,
}

/// Pattern detector with non-overlapping renewal: after each completed
/// event the search starts afresh.
struct Detector {
    k1: u32,
    k2: u32,
    f: u32,
    s: u32,
}

impl Detector {
    fn new(cfg: &K1K2Config) -> Self {
        Self {
            k1: cfg.k1,
            k2: cfg.k2,
            f: 0,
            s: 0,
        }
    }

    /// Feeds one trial; true when it completes an event.
    fn step(&mut self, success: bool) -> bool {
        if success {
            if self.f == self.k1 {
                self.s += 1;
                if self.s == self.k2 {
                    self.f = 0;
                    self.s = 0;
                    return true;
                }
            } else {
                self.f = 0;
                self.s = 0;
            }
        } else {
            if self.s > 0 {
                self.f = 1.min(self.k1);
                self.s = 0;
            } else {
                self.f = (self.f + 1).min(self.k1);
            }
            if self.k2 == 0 && self.f == self.k1 {
                self.f = 0;
                return true;
            }
        }
        false
    }
}

fn success_threshold(p_bar: f64) -> u64 {
    // P(u < t) = t / 2^64 for uniform u
    (p_bar * 2f64.powi(64)) as u64
}

fn simulate_chunk(cfg: &K1K2Config, seed: u64, chunk: u64, trials: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    let threshold = success_threshold(cfg.p_bar);
    let non_event = (cfg.n as u64) * cfg.k() as u64;
    let mut hist = Vec::new();
    for _ in 0..trials {
        let mut det = Detector::new(cfg);
        let (mut events, mut steps) = (0u32, 0u64);
        while events < cfg.n {
            steps += 1;
            if det.step(rng.next_u64() < threshold) {
                events += 1;
            }
        }
        let t = (steps - non_event) as usize;
        if t >= hist.len() {
            hist.resize(t + 1, 0);
        }
        hist[t] += 1;
    }
    hist
}

/// Simulates `trials` independent waits for the n-th event and records
/// the number of trials not spent inside an event.
pub fn simulate_k1k2(cfg: &K1K2Config, trials: u64, seed: u64) -> Result<SimulationRun> {
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    let chunks = trials.div_ceil(SIMULATION_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let size = SIMULATION_CHUNK.min(trials - c * SIMULATION_CHUNK);
            simulate_chunk(cfg, seed, c, size)
        })
        .reduce(Vec::new, |mut a, b| {
            if b.len() > a.len() {
                a.resize(b.len(), 0);
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        });
    let n = trials as f64;
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let std_errors = probs.iter().map(|&p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok(SimulationRun {
        cfg: *cfg,
        seed,
        trials,
        counts,
        empirical: Pmf::from_parts(probs, 0.0)?,
        std_errors,
    })
}

/// Bins whose expected count is below this are left out of the
/// standardized comparison, where the normal approximation is poor.
pub const MIN_EXPECTED_COUNT: f64 = 10.0;

/// Largest `|count - N p| / sqrt(N p (1 - p))` over bins with expected
/// count at least [`MIN_EXPECTED_COUNT`], with `p` from `reference`.
pub fn max_standardized_deviation(run: &SimulationRun, reference: &Pmf) -> f64 {
    let n = run.trials as f64;
    (0..reference.len())
        .filter_map(|m| {
            let p = reference.get(m);
            let expected = n * p;
            (expected >= MIN_EXPECTED_COUNT).then(|| {
                let observed = run.counts.get(m).copied().unwrap_or(0) as f64;
                (observed - expected).abs() / (expected * (1.0 - p)).sqrt()
            })
        })
        .fold(0.0, f64::max)
}

/// Absolute slack for rounding when comparing an exact distance with a
/// bound that is zero in exact arithmetic.
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct DominationReport {
    pub bound: f64,
    pub tail_estimate: f64,
    pub exact_tv: f64,
    pub tv_error: f64,
    /// Length of the PMFs compared.
    pub support: usize,
    /// `bound + tail_estimate - exact_tv`; negative means violated.
    pub margin: f64,
}

fn dominate(report: &BoundReport, x: &Pmf, y: &Pmf, context: String) -> Result<DominationReport> {
    let tv = tv_distance(x, y);
    let margin = report.bound + report.tail_estimate - tv.value;
    if margin < -ROUNDING_SLACK {
        return Err(Error::DominationViolated {
            exact: tv.value,
            error: tv.error,
            bound: report.bound,
            context,
        });
    }
    Ok(DominationReport {
        bound: report.bound,
        tail_estimate: report.tail_estimate,
        exact_tv: tv.value,
        tv_error: tv.error,
        support: x.len(),
        margin,
    })
}

/// Support long enough for the exact PMF of `Y` to hold all but a
/// negligible tail.
pub fn mixture_support(mixture: &[ComponentSpec]) -> Result<usize> {
    let m = aggregate(mixture)?;
    Ok((m.mu + 40.0 * m.sigma2.sqrt() + 100.0).max(2000.0).ceil() as usize)
}

/// Checks `d_TV(Y, approximant) <= bound + tail` for a mixture report.
pub fn verify_domination(mixture: &[ComponentSpec], report: &BoundReport, len: usize) -> Result<DominationReport> {
    let y = mixture_pmf(mixture, len)?;
    let z = approximant_pmf(&report.params, len);
    let labels: Vec<String> = mixture.iter().map(|s| s.label()).collect();
    dominate(report, &y, &z, format!("{} on [{}]", report.scheme.as_str(), labels.join(", ")))
}

/// Longest waiting-time support evaluated in full.
pub const MAX_EXACT_SUPPORT: usize = 16_000_000;
/// Truncation used when the full support is out of reach.
pub const TRUNCATED_SUPPORT: usize = 5000;

/// Support that holds essentially all of `T́`, or the fixed truncation
/// when that would exceed [`MAX_EXACT_SUPPORT`].
pub fn waiting_support(cfg: &K1K2Config) -> usize {
    let (a, k, n) = (cfg.a(), cfg.k() as f64, cfg.n as f64);
    let mean = n * (1.0 - k * a) / a;
    let sd = (n * (1.0 - (2.0 * k - 1.0) * a)).max(0.0).sqrt() / a;
    // for n = 1 this reaches about 31/a, leaving a tail near e^-31
    let full = mean + 30.0 * sd + 100.0;
    if full <= MAX_EXACT_SUPPORT as f64 {
        (full.ceil() as usize).max(TRUNCATED_SUPPORT)
    } else {
        TRUNCATED_SUPPORT
    }
}

/// Domination for a waiting-time cell under the one- (`two = false`) or
/// two-parameter scheme.
pub fn verify_domination_k1k2(cfg: &K1K2Config, two: bool, truncation: usize) -> Result<DominationReport> {
    let report = if two {
        two_param_bound_k1k2(cfg, truncation, Form::Tabulated)?
    } else {
        one_param_bound_k1k2(cfg, truncation, Form::Tabulated)?
    };
    let len = waiting_support(cfg);
    let t = waiting_pmf_recursive(cfg, len)?;
    let z = approximant_pmf(&report.params, len);
    dominate(
        &report,
        &t,
        &z,
        format!("{} at (k1,k2)=({},{}), p_bar={}, n={}", report.scheme.as_str(), cfg.k1, cfg.k2, cfg.p_bar, cfg.n),
    )
}

/// [`verify_domination_k1k2`] at the default truncation.
pub fn verify_table_cell(cfg: &K1K2Config, two: bool) -> Result<DominationReport> {
    verify_domination_k1k2(cfg, two, DEFAULT_TRUNCATION)
}
