//! Rényi-DP accounting for the subsampled Gaussian mechanism.
//!
//! With `mu0 = N(0, sigma^2)`, `mu1 = N(1, sigma^2)` and the mixture
//! `mu = (1 - q) mu0 + q mu1`, the order-`alpha` bound is
//! `ln(A_alpha) / (alpha - 1)` where `A_alpha = E_{z ~ mu0}[(mu(z)/mu0(z))^alpha]`.
//! Integer orders use the binomial expansion of `A_alpha`; fractional orders
//! use the two-sided erfc series. Everything is summed in log space.

use statrs::function::erf::erfc;

use crate::{Error, Result};

/// Version tag of [`default_orders`]. Any change to the grid changes every
/// solved noise multiplier, so it is bumped with the grid.
pub const ORDER_GRID_VERSION: u32 = 1;

/// The fixed order grid: 1.25, 1.5, every integer 2..=64, then 72, 80, 96,
/// 128, 192, 256, 384, 512.
pub fn default_orders() -> Vec<f64> {
    let mut orders = vec![1.25, 1.5];
    orders.extend((2..=64).map(f64::from));
    orders.extend([72.0, 80.0, 96.0, 128.0, 192.0, 256.0, 384.0, 512.0]);
    orders
}

/// Per-step Rényi divergence bound of order `order` for the Gaussian
/// mechanism with noise multiplier `sigma` under sampling fraction `q`.
pub fn rdp_subsampled_gaussian(q: f64, sigma: f64, order: f64) -> Result<f64> {
    if !(order > 1.0) || !order.is_finite() {
        return Err(Error::InvalidPrivacy(format!("Rényi order must be finite and > 1, got {order}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidPrivacy(format!("sigma must be positive and finite, got {sigma}")));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidPrivacy(format!("sampling fraction must be in (0, 1], got {q}")));
    }
    if q == 1.0 {
        return Ok(order / (2.0 * sigma * sigma));
    }
    let log_a = if order.fract() == 0.0 {
        log_a_integer(q, sigma, order as u64)
    } else {
        log_a_fractional(q, sigma, order)
    };
    Ok((log_a / (order - 1.0)).max(0.0))
}

fn log_add(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(exp(a) - exp(b))` for `a >= b`.
fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a <= b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

fn log_a_integer(q: f64, sigma: f64, alpha: u64) -> f64 {
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    let two_var = 2.0 * sigma * sigma;
    let a = alpha as f64;
    let mut log_binom = 0.0;
    let mut terms = Vec::with_capacity(alpha as usize + 1);
    for i in 0..=alpha {
        let fi = i as f64;
        terms.push(log_binom + fi * ln_q + (a - fi) * ln_1mq + (fi * fi - fi) / two_var);
        log_binom += ((a - fi) / (fi + 1.0)).ln();
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn log_erfc(x: f64) -> f64 {
    let r = erfc(x);
    if r > 0.0 && x < 25.0 {
        r.ln()
    } else {
        // asymptotic tail of erfc
        let x2 = x * x;
        -std::f64::consts::PI.ln() / 2.0 - x.ln() - x2 - 0.5 / x2 + 0.625 / (x2 * x2)
            - 37.0 / 24.0 / (x2 * x2 * x2)
            + 353.0 / 64.0 / (x2 * x2 * x2 * x2)
    }
}

fn log_a_fractional(q: f64, sigma: f64, alpha: f64) -> f64 {
    // Split the integral at z0, where mu0 and mu1 weighted by q cross.
    let z0 = sigma * sigma * (1.0 / q - 1.0).ln() + 0.5;
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    let two_var = 2.0 * sigma * sigma;
    let root2_sigma = std::f64::consts::SQRT_2 * sigma;
    let ln_half = 0.5f64.ln();

    let (mut log_a0, mut log_a1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    // generalized binomial coefficient C(alpha, i), tracked as sign and log-magnitude
    let (mut coef_sign, mut log_coef) = (1.0f64, 0.0f64);
    for i in 0..10_000u32 {
        let fi = f64::from(i);
        let j = alpha - fi;
        let log_t0 = log_coef + fi * ln_q + j * ln_1mq;
        let log_t1 = log_coef + j * ln_q + fi * ln_1mq;
        let log_e0 = ln_half + log_erfc((fi - z0) / root2_sigma);
        let log_e1 = ln_half + log_erfc((z0 - j) / root2_sigma);
        let log_s0 = log_t0 + (fi * fi - fi) / two_var + log_e0;
        let log_s1 = log_t1 + (j * j - j) / two_var + log_e1;
        if coef_sign > 0.0 {
            log_a0 = log_add(log_a0, log_s0);
            log_a1 = log_add(log_a1, log_s1);
        } else {
            log_a0 = log_sub(log_a0, log_s0);
            log_a1 = log_sub(log_a1, log_s1);
        }
        if log_s0.max(log_s1) < -30.0 && fi > alpha {
            break;
        }
        let ratio = (alpha - fi) / (fi + 1.0);
        if ratio < 0.0 {
            coef_sign = -coef_sign;
        }
        log_coef += ratio.abs().ln();
    }
    log_add(log_a0, log_a1)
}

/// Total Rényi curve of `steps` compositions on `orders`.
pub fn rdp_curve(q: f64, sigma: f64, steps: u64, orders: &[f64]) -> Result<Vec<(f64, f64)>> {
    orders
        .iter()
        .map(|&order| Ok((order, steps as f64 * rdp_subsampled_gaussian(q, sigma, order)?)))
        .collect()
}

/// An (epsilon, order) pair from a Rényi curve conversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonAtOrder {
    pub epsilon: f64,
    pub order: f64,
}

/// Converts a Rényi curve to (epsilon, delta)-DP:
/// `min over orders of rdp(order) + ln(1/delta) / (order - 1)`.
pub fn epsilon_from_rdp(curve: &[(f64, f64)], delta: f64) -> Result<EpsilonAtOrder> {
    if curve.is_empty() {
        return Err(Error::InvalidPrivacy("empty Rényi order grid".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidPrivacy(format!("delta must be in (0, 1), got {delta}")));
    }
    let ln_inv_delta = -delta.ln();
    let mut best = EpsilonAtOrder {
        epsilon: f64::INFINITY,
        order: f64::NAN,
    };
    for &(order, rdp) in curve {
        if !(order > 1.0) {
            return Err(Error::InvalidPrivacy(format!("Rényi order must be > 1, got {order}")));
        }
        let eps = rdp + ln_inv_delta / (order - 1.0);
        if eps < best.epsilon {
            best = EpsilonAtOrder { epsilon: eps, order };
        }
    }
    Ok(best)
}

/// Epsilon spent by `steps` subsampled Gaussian steps at `(q, sigma)`.
pub fn epsilon_for_sigma(q: f64, sigma: f64, steps: u64, delta: f64) -> Result<f64> {
    let curve = rdp_curve(q, sigma, steps, &default_orders())?;
    Ok(epsilon_from_rdp(&curve, delta)?.epsilon)
}
