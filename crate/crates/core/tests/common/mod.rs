//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::cell::RefCell;

use astro_float::{BigFloat, Consts, RoundingMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subjectdp::data::{generate_synthetic, DataItem, ItemsPerSubject, Registry, SubjectDataset, SubjectId, SyntheticSpec};

pub const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

/// Arbitrary-precision arithmetic with a shared constants cache.
pub struct Hp {
    cc: RefCell<Consts>,
}

impl Hp {
    pub fn new() -> Self {
        Self {
            cc: RefCell::new(Consts::new().expect("constants cache")),
        }
    }

    pub fn f(&self, v: f64) -> BigFloat {
        BigFloat::from_f64(v, PREC)
    }

    pub fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, PREC, RM)
    }

    pub fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, PREC, RM)
    }

    pub fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, PREC, RM)
    }

    pub fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, PREC, RM)
    }

    pub fn exp(&self, a: &BigFloat) -> BigFloat {
        a.exp(PREC, RM, &mut self.cc.borrow_mut())
    }

    pub fn ln(&self, a: &BigFloat) -> BigFloat {
        a.ln(PREC, RM, &mut self.cc.borrow_mut())
    }

    pub fn sqrt(&self, a: &BigFloat) -> BigFloat {
        a.sqrt(PREC, RM)
    }

    pub fn to_f64(&self, a: &BigFloat) -> f64 {
        let s = format!("{a}");
        s.parse::<f64>().unwrap_or_else(|_| panic!("unparseable big float {s}"))
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Rényi divergence of order `alpha` between `N(0, s^2)` and the mixture
/// `(1-q) N(0, s^2) + q N(1, s^2)` evaluated by direct numerical integration
/// of `E_{z ~ N(0, s^2)} [(1 - q + q e^{(2z - 1) / (2 s^2)})^alpha]`.
pub fn rdp_quadrature(q: f64, sigma: f64, alpha: f64) -> f64 {
    let s2 = sigma * sigma;
    let log_norm = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    // ln(1 - q + q e^t)
    let ln_mix = |z: f64| {
        let t = (2.0 * z - 1.0) / (2.0 * s2);
        if t > 0.0 {
            t + (q + (1.0 - q) * (-t).exp()).ln()
        } else {
            (q * t.exp_m1()).ln_1p()
        }
    };
    let log_gauss = |z: f64| -z * z / (2.0 * s2) + log_norm;

    // The integrand is concentrated within a few sigma of a point between 0
    // and alpha; integrate generously past both ends.
    let lo = -40.0 * sigma;
    let hi = alpha + 40.0 * sigma;
    let panels = ((hi - lo) / (0.25 * sigma)).ceil() as usize;
    let width = (hi - lo) / panels as f64;
    let rule = gauss_legendre(24);
    let mut points = Vec::with_capacity(panels * rule.len());
    for p in 0..panels {
        let a = lo + p as f64 * width;
        for &(x, w) in &rule {
            let z = a + (x + 1.0) * 0.5 * width;
            points.push((z, w * 0.5 * width));
        }
    }

    let terms: Vec<f64> = points.iter().map(|&(z, w)| w.ln() + log_gauss(z) + alpha * ln_mix(z)).collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_a = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
    if log_a > 1.0 {
        return log_a / (alpha - 1.0);
    }
    // Near zero the sum above loses digits; integrate A - 1 directly.
    let d: f64 = points.iter().map(|&(z, w)| w * log_gauss(z).exp() * (alpha * ln_mix(z)).exp_m1()).sum();
    d.ln_1p() / (alpha - 1.0)
}

pub fn item(features: Vec<f64>, label: usize, subject: u64) -> DataItem {
    DataItem {
        features,
        label,
        subject: SubjectId(subject),
    }
}

/// A dataset with random features, labels and subject assignment.
pub fn random_dataset(rng: &mut impl Rng, n: usize, d_in: usize, classes: usize, subjects: u64) -> SubjectDataset {
    let items = (0..n)
        .map(|_| {
            item(
                (0..d_in).map(|_| rng.random_range(-2.0..2.0)).collect(),
                rng.random_range(0..classes),
                rng.random_range(0..subjects),
            )
        })
        .collect();
    SubjectDataset::new(items).unwrap()
}

pub fn synthetic(n_subjects: usize, mean_items: f64, d_in: usize, classes: usize, seed: u64) -> Registry {
    let mut spec = SyntheticSpec::new(n_subjects, ItemsPerSubject::ShiftedPoisson { mean: mean_items }, d_in, classes, seed);
    spec.class_separation = 0.5;
    generate_synthetic(&spec).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
