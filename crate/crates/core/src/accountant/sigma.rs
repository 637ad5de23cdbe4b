//! Noise-multiplier solvers.

use serde::{Deserialize, Serialize};

use super::rdp::epsilon_for_sigma;
use super::{AccountingParams, PrivacyBudget};
use crate::{Error, Result};

pub const SIGMA_MIN: f64 = 1e-2;
pub const SIGMA_MAX: f64 = 1e4;
/// Relative width of the final bisection bracket.
pub const SIGMA_REL_TOL: f64 = 1e-3;

/// Smallest noise multiplier (to [`SIGMA_REL_TOL`]) whose Rényi-accounted
/// epsilon over `params.steps` stays within `budget`.
///
/// The sampling fraction used is `q * subject_multiplier`, clamped to 1.
pub fn solve_sigma(budget: PrivacyBudget, params: &AccountingParams) -> Result<f64> {
    let q = params.effective_sampling_fraction();
    let steps = params.steps;
    let eps = |sigma: f64| epsilon_for_sigma(q, sigma, steps, budget.delta());

    if eps(SIGMA_MAX)? > budget.epsilon() {
        return Err(Error::BudgetInfeasible(format!(
            "epsilon {} at delta {} over {steps} steps (q = {q}) needs sigma > {SIGMA_MAX}",
            budget.epsilon(),
            budget.delta()
        )));
    }
    if eps(SIGMA_MIN)? <= budget.epsilon() {
        return Ok(SIGMA_MIN);
    }
    let (mut lo, mut hi) = (SIGMA_MIN, SIGMA_MAX);
    while hi / lo > 1.0 + SIGMA_REL_TOL {
        let mid = (lo * hi).sqrt();
        if eps(mid)? <= budget.epsilon() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Reference value of the closed-form sufficient condition
/// `sigma >= c2 q sqrt(T ln(1/delta)) / epsilon`.
///
/// The constants are unspecified in the source result; the defaults of 1 make
/// this a shape reference only, never the noise actually used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormSigma {
    pub sigma: f64,
    /// Whether `epsilon < c1 q^2 T` held.
    pub precondition_holds: bool,
}

pub fn closed_form_sigma(budget: PrivacyBudget, params: &AccountingParams) -> ClosedFormSigma {
    let q = params.sampling_fraction * params.subject_multiplier;
    let t = params.steps as f64;
    let sigma = params.c2 * q * (t * (-budget.delta().ln())).sqrt() / budget.epsilon();
    let precondition_holds = budget.epsilon() < params.c1 * q * q * t;
    if !precondition_holds {
        log::warn!(
            "closed-form sigma precondition epsilon < c1 q^2 T fails (epsilon = {}, c1 q^2 T = {})",
            budget.epsilon(),
            params.c1 * q * q * t
        );
    }
    ClosedFormSigma {
        sigma,
        precondition_holds,
    }
}

/// `1 / (sqrt(2 pi) eps delta e^eps)`, the noise floor for the per-round
/// update of a user to act as a randomized response.
pub fn randomized_response_sigma(budget: PrivacyBudget) -> f64 {
    let log = 0.5 * (2.0 * std::f64::consts::PI).ln() + budget.epsilon().ln() + budget.delta().ln() + budget.epsilon();
    (-log).exp()
}

/// Both user-level constraints and the binding one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserLdpSigma {
    pub sigma: f64,
    pub accountant_sigma: f64,
    pub randomized_response_sigma: f64,
}

/// Noise multiplier for user-level local DP: the full-batch (q = 1)
/// accountant solution over `steps`, raised to the randomized-response floor
/// when that is larger.
pub fn userldp_sigma(budget: PrivacyBudget, steps: u64) -> Result<UserLdpSigma> {
    let params = AccountingParams::new(1.0, steps);
    let accountant_sigma = solve_sigma(budget, &params)?;
    let rr = randomized_response_sigma(budget);
    Ok(UserLdpSigma {
        sigma: accountant_sigma.max(rr),
        accountant_sigma,
        randomized_response_sigma: rr,
    })
}
