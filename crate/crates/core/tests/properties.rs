mod common;

use nbstein::bounds::{corollary_two, theorem_one, theorem_three, theorem_two, DEFAULT_TRUNCATION};
use nbstein::dist::ComponentSpec;
use nbstein::k1k2::{b_closed_form, b_coeffs, waiting_pmf, waiting_pmf_recursive, K1K2Config};
use nbstein::matching::{match_one_param, match_three_param, match_two_param, OneParamMode};
use nbstein::moments::aggregate;
use nbstein::oracle::{convolve, geometric_pmf, mixture_pmf, mixture_support, nb_pmf, tv_distance, verify_domination};
use nbstein::steinop::{stein_expectation, SteinOperator, TestFunction};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn geometric() -> impl Strategy<Value = ComponentSpec> {
    (0.2f64..0.95, 1u32..12).prop_map(|(p, n)| ComponentSpec::geometric(p, n).unwrap())
}

fn component() -> impl Strategy<Value = ComponentSpec> {
    prop_oneof![
        geometric(),
        (0.05f64..3.0, 1u32..6).prop_map(|(l, n)| ComponentSpec::poisson(l, n).unwrap()),
        (1u32..8, 0.02f64..0.45, 1u32..6).prop_map(|(m, p, n)| ComponentSpec::binomial(m, p, n).unwrap()),
    ]
}

fn pattern() -> impl Strategy<Value = K1K2Config> {
    (1u32..4, 1u32..5, 0.15f64..0.6, 1u32..6)
        .prop_filter_map("self-overlapping", |(k1, k2, p, n)| K1K2Config::new(k1, k2, p, n).ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixture_pmf_is_a_distribution(mix in prop::collection::vec(component(), 1..4)) {
        let len = mixture_support(&mix).unwrap();
        let y = mixture_pmf(&mix, len).unwrap();
        prop_assert!(y.probs().iter().all(|&x| x >= 0.0));
        prop_assert!((y.head_mass() + y.tail_mass() - 1.0).abs() < 1e-10);
        let m = aggregate(&mix).unwrap();
        let mean: f64 = y.probs().iter().enumerate().map(|(j, &x)| j as f64 * x).sum();
        prop_assert!(rel_err(mean, m.mu) < 1e-8 || (mean - m.mu).abs() < 1e-10);
    }

    #[test]
    fn matching_reproduces_moments(mix in prop::collection::vec(geometric(), 1..4)) {
        let m = aggregate(&mix).unwrap();
        let two = match_two_param(&m).unwrap();
        prop_assert!(rel_err(two.mean(), m.mu) < 1e-10);
        prop_assert!(rel_err(two.variance(), m.sigma2) < 1e-10);
        if let Ok(fit) = match_three_param(&m) {
            let mean = fit.nb.mean() + fit.q_hat / fit.p_hat;
            let var = fit.nb.variance() + fit.q_hat / (fit.p_hat * fit.p_hat);
            prop_assert!(rel_err(mean, m.mu) < 1e-7);
            prop_assert!(rel_err(var, m.sigma2) < 1e-7);
        }
    }

    #[test]
    fn bounds_dominate_exact_distance(mix in prop::collection::vec(geometric(), 2..4), alpha in 0.5f64..20.0) {
        let m = aggregate(&mix).unwrap();
        let len = mixture_support(&mix).unwrap();
        let one = match_one_param(&m, OneParamMode::FixedAlpha(alpha)).unwrap();
        let mut reports = vec![
            theorem_one(&mix, &one, DEFAULT_TRUNCATION).unwrap(),
            theorem_two(&mix, &match_two_param(&m).unwrap(), DEFAULT_TRUNCATION).unwrap(),
        ];
        if let Ok(r) = match_three_param(&m).and_then(|f| theorem_three(&mix, &f, DEFAULT_TRUNCATION)) {
            reports.push(r);
        }
        for r in &reports {
            prop_assert!(r.bound >= 0.0);
            let d = verify_domination(&mix, r, len);
            prop_assert!(d.is_ok(), "{:?}", d);
        }
    }

    #[test]
    fn closed_form_matches_series_for_geometrics(ps in prop::collection::vec(0.52f64..0.95, 1..4)) {
        let mix: Vec<_> = ps.iter().map(|&p| ComponentSpec::geometric(p, 3).unwrap()).collect();
        let params = match_two_param(&aggregate(&mix).unwrap()).unwrap();
        let t = theorem_two(&mix, &params, DEFAULT_TRUNCATION).unwrap();
        let c = corollary_two(&mix, &params).unwrap();
        prop_assert!((t.bound - c.bound).abs() <= 1e-10f64.max(t.tail_estimate));
    }

    #[test]
    fn tv_is_a_metric(a in geometric(), b in geometric(), c in geometric()) {
        let len = 4000;
        let (x, y, z) = (a.pmf(len).unwrap(), b.pmf(len).unwrap(), c.pmf(len).unwrap());
        let xy = tv_distance(&x, &y);
        let yx = tv_distance(&y, &x);
        prop_assert!((xy.value - yx.value).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&xy.value));
        prop_assert!(tv_distance(&x, &x).value < 1e-15);
        let slack = xy.error + tv_distance(&y, &z).error + tv_distance(&x, &z).error + 1e-12;
        prop_assert!(tv_distance(&x, &z).value <= xy.value + tv_distance(&y, &z).value + slack);
    }

    #[test]
    fn geometric_convolution_is_negative_binomial(p in 0.2f64..0.9, n in 1u32..6) {
        let len = 3000;
        let g = geometric_pmf(p, len);
        let mut acc = g.clone();
        for _ in 1..n {
            acc = convolve(&acc, &g, len);
        }
        let nb = nb_pmf(&nbstein::matching::NbParams::new(n as f64, p).unwrap(), len);
        prop_assert!(tv_distance(&acc, &nb).value < 1e-12);
    }

    #[test]
    fn b_coefficients_are_probabilities(cfg in pattern()) {
        let b = b_coeffs(&cfg, 300).unwrap();
        let mut partial = 0.0;
        for m in 0..=300 {
            let v = b.get(m);
            prop_assert!((0.0..=1.0).contains(&v));
            // the alternating closed form loses digits for large m
            if m <= 30 {
                prop_assert!((v - b_closed_form(cfg.a(), cfg.k(), m)).abs() < 1e-10);
            }
            partial += v;
        }
        prop_assert!(partial <= 1.0 / cfg.a() * (1.0 + 1e-12));
    }

    #[test]
    fn waiting_time_paths_agree(cfg in pattern()) {
        let len = 400;
        let direct = waiting_pmf(&cfg, len).unwrap();
        let rec = waiting_pmf_recursive(&cfg, len).unwrap();
        for m in 0..len {
            prop_assert!((direct.get(m) - rec.get(m)).abs() < 1e-12);
        }
    }

    #[test]
    fn nb_stein_operator_annihilates(alpha in 0.3f64..15.0, p in 0.2f64..0.9, seed in any::<u64>()) {
        let params = nbstein::matching::NbParams::new(alpha, p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = TestFunction::random(&mut rng, 30);
        let e = stein_expectation(&SteinOperator::nb(&params), &nb_pmf(&params, 4000), &g);
        prop_assert!(e.value.abs() <= 1e-9 + e.tail_bound);
    }

    #[test]
    fn mixture_stein_operator_annihilates(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mix = random_overdispersed(&mut rng);
        let m = aggregate(&mix).unwrap();
        let params = match_two_param(&m).unwrap();
        let len = mixture_support(&mix).unwrap();
        let op = SteinOperator::y(&mix, &params, DEFAULT_TRUNCATION).unwrap();
        let g = TestFunction::random(&mut rng, 30);
        let e = stein_expectation(&op, &mixture_pmf(&mix, len).unwrap(), &g);
        prop_assert!(e.value.abs() <= 1e-9 + e.tail_bound);
    }
}
