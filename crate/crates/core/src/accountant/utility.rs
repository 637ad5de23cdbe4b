//! Excess population loss bounds for convex, L-Lipschitz losses.
//!
//! Each bound is the sum of an optimization term, a privacy-noise term and a
//! stability (generalization) term; the breakdown is kept so reports can show
//! which term dominates.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityBoundInputs {
    /// L
    pub lipschitz: f64,
    /// M, bound on the parameter-space diameter
    pub diameter: f64,
    pub learning_rate: f64,
    pub steps: f64,
    /// training set size
    pub n: f64,
    /// model dimension
    pub dimension: f64,
    /// group size or expected items per subject
    pub k: f64,
    pub sampling_fraction: f64,
    /// minibatch size
    pub m: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub c2: f64,
}

impl UtilityBoundInputs {
    fn validate(&self) -> Result<()> {
        let fields = [
            ("lipschitz", self.lipschitz),
            ("diameter", self.diameter),
            ("learning_rate", self.learning_rate),
            ("steps", self.steps),
            ("n", self.n),
            ("dimension", self.dimension),
            ("k", self.k),
            ("sampling_fraction", self.sampling_fraction),
            ("m", self.m),
            ("epsilon", self.epsilon),
            ("delta", self.delta),
            ("c2", self.c2),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("utility bound input {name} must be positive, got {v}")));
            }
        }
        if self.delta >= 1.0 {
            return Err(Error::InvalidConfig("delta must be below 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundBreakdown {
    pub optimization: f64,
    pub noise: f64,
    pub generalization: f64,
    pub total: f64,
}

impl BoundBreakdown {
    fn new(optimization: f64, noise: f64, generalization: f64) -> Self {
        Self {
            optimization,
            noise,
            generalization,
            total: optimization + noise + generalization,
        }
    }
}

fn classic_optimization(x: &UtilityBoundInputs) -> f64 {
    x.diameter * x.diameter / (2.0 * x.learning_rate * x.steps) + x.learning_rate * x.lipschitz * x.lipschitz / 2.0
}

fn generalization(x: &UtilityBoundInputs) -> f64 {
    x.lipschitz * x.lipschitz * x.learning_rate * (x.steps + 1.0) / x.n
}

/// `eta d c2^2 g^2 s^2 / eps^2 * T * ln(g e^{(g-1) eps / g} / delta)`, with the
/// logarithm expanded so large `g` never overflows.
fn group_noise(x: &UtilityBoundInputs, g: f64, scale: f64) -> f64 {
    let log_term = g.ln() + (g - 1.0) * x.epsilon / g - x.delta.ln();
    x.learning_rate * x.dimension * (x.c2 * x.c2 * g * g * scale * scale) / (x.epsilon * x.epsilon) * x.steps * log_term
}

/// Bound for LocalGroupDP with group size `k` and sampling fraction `q`.
pub fn utility_bound_localgroupdp(x: &UtilityBoundInputs) -> Result<BoundBreakdown> {
    x.validate()?;
    Ok(BoundBreakdown::new(
        classic_optimization(x),
        group_noise(x, x.k, x.sampling_fraction),
        generalization(x),
    ))
}

/// Bound for UserLDP: the group size becomes the minibatch size `m` and the
/// sampling fraction is 1.
pub fn utility_bound_userldp(x: &UtilityBoundInputs) -> Result<BoundBreakdown> {
    x.validate()?;
    Ok(BoundBreakdown::new(classic_optimization(x), group_noise(x, x.m, 1.0), generalization(x)))
}

/// Bound for HiGradAvgDP with `k` expected items per subject.
pub fn utility_bound_higradavgdp(x: &UtilityBoundInputs) -> Result<BoundBreakdown> {
    x.validate()?;
    let optimization = (x.k * x.k * x.diameter * x.diameter + x.learning_rate * x.learning_rate * x.steps * x.lipschitz * x.lipschitz)
        / (2.0 * x.k * x.learning_rate * x.steps);
    let noise = x.learning_rate * x.dimension * (x.c2 * x.c2 * x.k * x.k * x.sampling_fraction * x.sampling_fraction)
        / (x.epsilon * x.epsilon)
        * x.steps
        * (-x.delta.ln());
    Ok(BoundBreakdown::new(optimization, noise, generalization(x)))
}
