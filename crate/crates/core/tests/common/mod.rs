//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use nbstein::dist::ComponentSpec;
use nbstein::moments::aggregate;
use rand::Rng;

/// One-parameter waiting-time bounds, rows in grid order, columns p̄ = 1/4, 1/8, 1/16.
pub const ONE_PARAM_TABLE: [((u32, u32), [f64; 3]); 21] = [
    ((1, 4), [1.05816, 0.141903, 0.0013244]),
    ((1, 5), [0.672985, 0.00424482, 0.0000438252]),
    ((1, 6), [0.116891, 0.000260107, 3.53445e-6]),
    ((1, 7), [0.0124531, 0.0000358306, 2.93422e-7]),
    ((1, 8), [0.00181219, 5.64488e-6, 2.35743e-8]),
    ((1, 9), [0.000422883, 8.80291e-7, 1.84173e-9]),
    ((2, 4), [1.05743, 0.117485, 0.00139172]),
    ((2, 5), [0.521417, 0.00381735, 0.0000559635]),
    ((2, 6), [0.0762276, 0.000283511, 4.41285e-6]),
    ((2, 7), [0.00866093, 0.0000400281, 3.5366e-7]),
    ((2, 8), [0.00148472, 6.17008e-6, 2.76261e-8]),
    ((3, 4), [1.03096, 0.0975824, 0.00148602]),
    ((3, 5), [0.382432, 0.00352341, 0.0000687831]),
    ((3, 6), [0.0500174, 0.000305253, 5.31503e-6]),
    ((3, 7), [0.00631033, 0.0000435841, 4.14431e-7]),
    ((4, 4), [0.961538, 0.0814895, 0.00160097]),
    ((4, 5), [0.26916, 0.00332182, 0.0000820025]),
    ((4, 6), [0.0334377, 0.000324287, 6.22537e-6]),
    ((5, 4), [0.844592, 0.0685582, 0.00173112]),
    ((5, 5), [0.184463, 0.00318198, 0.0000953822]),
    ((6, 4), [0.69535, 0.0582122, 0.0018718]),
];

/// Two-parameter bounds; columns (p̄, n) = (1/4, 50), (1/4, 100), (1/8, 50),
/// (1/8, 100), (1/16, 50), (1/16, 100).
pub const TWO_PARAM_TABLE: [((u32, u32), [f64; 6]); 21] = [
    ((1, 4), [1.1293, 0.799532, 0.0318133, 0.0225235, 0.0000787781, 0.0000557739]),
    ((1, 5), [0.645954, 0.457328, 0.00037684, 0.000266798, 8.05622e-6, 5.70371e-6]),
    ((1, 6), [0.046521, 0.0329363, 0.0000529935, 0.0000375187, 8.80547e-7, 6.23417e-7]),
    ((1, 7), [0.00238398, 0.00168783, 0.0000105207, 7.44852e-6, 8.80545e-8, 6.23415e-8]),
    ((1, 8), [0.000459553, 0.000325358, 1.97243e-6, 1.39645e-6, 8.25511e-9, 5.84452e-9]),
    ((1, 9), [0.000155114, 0.000109819, 3.52218e-7, 2.49366e-7, 7.37063e-10, 5.21832e-10]),
    ((2, 4), [1.64106, 1.16185, 0.0345507, 0.0244615, 0.00013857, 0.0000981058]),
    ((2, 5), [0.553509, 0.391878, 0.000497124, 0.000351958, 0.0000132146, 9.35579e-6]),
    ((2, 6), [0.0305958, 0.0216614, 0.0000739922, 0.0000523856, 1.32082e-6, 9.35125e-7]),
    ((2, 7), [0.00198307, 0.00140399, 0.0000138079, 9.77585e-6, 1.23827e-7, 8.76677e-8]),
    ((2, 8), [0.000477953, 0.000338385, 2.46553e-6, 1.74557e-6, 1.10559e-8, 7.82748e-9]),
    ((3, 4), [2.09053, 1.48007, 0.0350269, 0.0247986, 0.00021872, 0.000154851]),
    ((3, 5), [0.417545, 0.295617, 0.000631458, 0.000447065, 0.0000198194, 0.0000140319]),
    ((3, 6), [0.0197698, 0.0139968, 0.0000969564, 0.000068644, 1.8574e-6, 1.31502e-6]),
    ((3, 7), [0.0017595, 0.00124571, 0.0000172595, 0.0000122196, 6.5839e-7, 1.17412e-7]),
    ((4, 4), [2.30166, 1.62955, 0.0339291, 0.0240214, 0.000319874, 0.000226467]),
    ((4, 5), [0.286267, 0.202673, 0.00077711, 0.000550184, 0.0000278687, 0.0000197307]),
    ((4, 6), [0.013037, 0.00923002, 0.000121071, 0.0000857165, 2.48759e-6, 1.76119e-6]),
    ((5, 4), [2.18446, 1.54657, 0.0319059, 0.022589, 0.00044202, 0.000312945]),
    ((5, 5), [0.183437, 0.129871, 0.000930408, 0.000658718, 0.0000373219, 0.0000264235]),
    ((6, 4), [1.80936, 1.281, 0.0294761, 0.0208687, 0.000584608, 0.000413895]),
];

pub const P_BARS: [f64; 3] = [0.25, 0.125, 0.0625];
pub const NS: [u32; 2] = [50, 100];

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Geometric,
    Poisson,
    Binomial,
}

/// A random component of `kind` inside the hypotheses of the closed forms
/// (q_i < 1/2 for geometric, p̃ < 1/2 for binomial).
pub fn random_component<R: Rng>(rng: &mut R, kind: Kind) -> ComponentSpec {
    let count = rng.random_range(1..=8);
    match kind {
        Kind::Geometric => ComponentSpec::geometric(rng.random_range(0.52..0.95), count).unwrap(),
        Kind::Poisson => ComponentSpec::poisson(rng.random_range(0.1..3.0), count).unwrap(),
        Kind::Binomial => ComponentSpec::binomial(rng.random_range(1..=6), rng.random_range(0.02..0.4), count).unwrap(),
    }
}

/// A mixture with one component of each listed kind.
pub fn random_mixture<R: Rng>(rng: &mut R, kinds: &[Kind]) -> Vec<ComponentSpec> {
    kinds.iter().map(|&k| random_component(rng, k)).collect()
}

/// Random geometric/Poisson/binomial mixture with variance above the mean,
/// geometric parameters anywhere in (0.2, 0.95).
pub fn random_overdispersed<R: Rng>(rng: &mut R) -> Vec<ComponentSpec> {
    loop {
        let parts = rng.random_range(1..=3);
        let mut mix = vec![ComponentSpec::geometric(rng.random_range(0.2..0.95), rng.random_range(1..=10)).unwrap()];
        for _ in 1..parts {
            let kind = [Kind::Geometric, Kind::Poisson, Kind::Binomial][rng.random_range(0..3)];
            mix.push(random_component(rng, kind));
        }
        if aggregate(&mix).unwrap().overdispersed() {
            return mix;
        }
    }
}
