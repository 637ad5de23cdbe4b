//! Privacy-loss arithmetic.
//!
//! Noise multipliers are always obtained by inverting a Rényi accountant over
//! a fixed order grid ([`rdp::default_orders`]). The closed-form
//! `c2 q sqrt(T ln(1/delta)) / epsilon` expression is kept as a labelled
//! reference only, since its constants are not pinned down.

mod group;
mod horizontal;
pub mod rdp;
mod sigma;
mod utility;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use group::{group_budget_split, group_dp_convert, GroupPrivacy, GroupVariant};
pub use horizontal::{apportion_per_round, plan_horizontal, HorizontalMode, HorizontalPlan};
pub use rdp::{default_orders, epsilon_for_sigma, epsilon_from_rdp, rdp_curve, rdp_subsampled_gaussian, EpsilonAtOrder, ORDER_GRID_VERSION};
pub use sigma::{
    closed_form_sigma, randomized_response_sigma, solve_sigma, userldp_sigma, ClosedFormSigma, UserLdpSigma, SIGMA_MAX, SIGMA_MIN,
    SIGMA_REL_TOL,
};
pub use utility::{utility_bound_higradavgdp, utility_bound_localgroupdp, utility_bound_userldp, BoundBreakdown, UtilityBoundInputs};

/// An (epsilon, delta) guarantee with `epsilon > 0` finite and `delta` in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBudget")]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

#[derive(Deserialize)]
struct RawBudget {
    epsilon: f64,
    delta: f64,
}

impl TryFrom<RawBudget> for PrivacyBudget {
    type Error = Error;

    fn try_from(raw: RawBudget) -> Result<Self> {
        PrivacyBudget::new(raw.epsilon, raw.delta)
    }
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidPrivacy(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidPrivacy(format!("delta must be in (0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Inputs to the noise solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountingParams {
    /// Item sampling fraction q = B / |D|.
    pub sampling_fraction: f64,
    /// Total minibatches accounted for.
    pub steps: u64,
    pub group_size: usize,
    /// Items-per-subject factor turning item sampling into subject sampling.
    pub subject_multiplier: f64,
    pub c1: f64,
    pub c2: f64,
}

impl AccountingParams {
    pub fn new(sampling_fraction: f64, steps: u64) -> Self {
        Self {
            sampling_fraction,
            steps,
            group_size: 1,
            subject_multiplier: 1.0,
            c1: 1.0,
            c2: 1.0,
        }
    }

    pub fn with_subject_multiplier(mut self, k: f64) -> Self {
        self.subject_multiplier = k;
        self
    }

    pub fn with_group_size(mut self, z: usize) -> Self {
        self.group_size = z;
        self
    }

    /// `q * subject_multiplier`, clamped to 1.
    pub fn effective_sampling_fraction(&self) -> f64 {
        let q = self.sampling_fraction * self.subject_multiplier;
        if q > 1.0 {
            log::warn!(
                "subject sampling fraction {} x {} exceeds 1; clamped to 1",
                self.sampling_fraction,
                self.subject_multiplier
            );
            1.0
        } else {
            q
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_fraction > 0.0 && self.sampling_fraction <= 1.0) {
            return Err(Error::InvalidPrivacy(format!("sampling fraction must be in (0, 1], got {}", self.sampling_fraction)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidPrivacy("steps must be at least 1".into()));
        }
        if self.group_size == 0 {
            return Err(Error::InvalidPrivacy("group size must be at least 1".into()));
        }
        if !(self.subject_multiplier >= 1.0) || !self.subject_multiplier.is_finite() {
            return Err(Error::InvalidPrivacy(format!("subject multiplier must be >= 1, got {}", self.subject_multiplier)));
        }
        Ok(())
    }
}

/// The privacy mechanism a noise plan is solved for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    /// Item-level DP-SGD.
    ItemLevel,
    /// Group privacy for a minibatch whose largest subject group is `group_size`.
    GroupLevel { group_size: usize },
    /// Subject sampling: q scaled by the items-per-subject factor.
    SubjectSampling { subject_multiplier: f64 },
    /// User-level local DP, q = 1.
    UserLocal,
}

impl Mechanism {
    /// Subject-level mechanisms compose horizontally across users.
    pub fn is_subject_level(&self) -> bool {
        !matches!(self, Mechanism::ItemLevel)
    }
}

/// Training schedule the noise is accounted over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub sampling_fraction: f64,
    pub batches_per_round: usize,
    pub rounds: usize,
    pub users_per_round: usize,
    pub mode: HorizontalMode,
}

/// A solved noise configuration with everything needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePlan {
    pub mechanism: Mechanism,
    pub budget: PrivacyBudget,
    /// Budget the accountant was inverted for (after group splitting).
    pub accounted_budget: PrivacyBudget,
    pub sigma: f64,
    pub per_round_epsilon: f64,
    pub configured_rounds: usize,
    pub effective_rounds: usize,
    pub users_per_round: usize,
    pub mode: HorizontalMode,
    pub batches_per_round: usize,
    pub steps_accounted: u64,
    pub sampling_fraction: f64,
    pub effective_sampling_fraction: f64,
    pub achieved_epsilon: f64,
    pub best_order: f64,
    pub accountant_sigma: f64,
    pub randomized_response_sigma: Option<f64>,
    pub closed_form_sigma: f64,
    pub closed_form_precondition_holds: bool,
    pub order_grid_version: u32,
}

/// Reference constants for the closed-form cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConstants {
    pub c1: f64,
    pub c2: f64,
}

impl Default for ReferenceConstants {
    fn default() -> Self {
        Self { c1: 1.0, c2: 1.0 }
    }
}

/// Solves the noise multiplier for `mechanism` over `schedule`.
///
/// Subject-level mechanisms apply horizontal composition: with round
/// reduction the noise is accounted over the configured `R` rounds and only
/// `ceil(R / sqrt(s))` are executed; with minibatch scaling `s` times as many
/// steps are accounted and all `R` rounds run. Item-level plans run all rounds.
pub fn plan_noise(budget: PrivacyBudget, mechanism: Mechanism, schedule: &StepSchedule, constants: ReferenceConstants) -> Result<NoisePlan> {
    if schedule.batches_per_round == 0 {
        return Err(Error::InvalidConfig("batches per round must be at least 1".into()));
    }
    let horizontal = if mechanism.is_subject_level() {
        plan_horizontal(schedule.rounds, schedule.users_per_round, schedule.mode)?
    } else {
        plan_horizontal(schedule.rounds, 1, schedule.mode)?
    };
    let steps = (schedule.batches_per_round * schedule.rounds * horizontal.step_multiplier) as u64;

    let (q, accounted_budget, params) = match mechanism {
        Mechanism::ItemLevel => (schedule.sampling_fraction, budget, AccountingParams::new(schedule.sampling_fraction, steps)),
        Mechanism::GroupLevel { group_size } => (
            schedule.sampling_fraction,
            group_budget_split(budget, group_size)?,
            AccountingParams::new(schedule.sampling_fraction, steps).with_group_size(group_size),
        ),
        Mechanism::SubjectSampling { subject_multiplier } => (
            schedule.sampling_fraction,
            budget,
            AccountingParams::new(schedule.sampling_fraction, steps).with_subject_multiplier(subject_multiplier),
        ),
        Mechanism::UserLocal => (1.0, budget, AccountingParams::new(1.0, steps)),
    };
    let params = AccountingParams {
        c1: constants.c1,
        c2: constants.c2,
        ..params
    };
    params.validate()?;

    let (sigma, accountant_sigma, rr) = match mechanism {
        Mechanism::UserLocal => {
            let s = userldp_sigma(accounted_budget, steps)?;
            (s.sigma, s.accountant_sigma, Some(s.randomized_response_sigma))
        }
        _ => {
            let s = solve_sigma(accounted_budget, &params)?;
            (s, s, None)
        }
    };
    let q_eff = params.effective_sampling_fraction();
    let curve = rdp_curve(q_eff, sigma, steps, &default_orders())?;
    let achieved = epsilon_from_rdp(&curve, accounted_budget.delta())?;
    let closed = closed_form_sigma(accounted_budget, &params);
    let rounds_equivalent = schedule.rounds * horizontal.step_multiplier;

    Ok(NoisePlan {
        mechanism,
        budget,
        accounted_budget,
        sigma,
        per_round_epsilon: apportion_per_round(budget.epsilon(), rounds_equivalent)?,
        configured_rounds: schedule.rounds,
        effective_rounds: horizontal.effective_rounds,
        users_per_round: schedule.users_per_round,
        mode: schedule.mode,
        batches_per_round: schedule.batches_per_round,
        steps_accounted: steps,
        sampling_fraction: q,
        effective_sampling_fraction: q_eff,
        achieved_epsilon: achieved.epsilon,
        best_order: achieved.order,
        accountant_sigma,
        randomized_response_sigma: rr,
        closed_form_sigma: closed.sigma,
        closed_form_precondition_holds: closed.precondition_holds,
        order_grid_version: ORDER_GRID_VERSION,
    })
}
