//! Server loop of a simulated federation.
//!
//! Each round the server samples `s` users without replacement, broadcasts
//! the current parameters, lets every sampled user run its local trainer and
//! replaces the model with the coordinate-wise mean of the returned
//! parameters.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{plan_horizontal, plan_noise, AccountingParams, HorizontalMode, Mechanism, NoisePlan, PrivacyBudget, ReferenceConstants, StepSchedule};
use crate::data::{max_subject_cardinality, DataItem, FederationLayout};
use crate::models::{evaluate, init_params, ModelSpec, ParamVector};
use crate::rng::{stream, Purpose, StreamKey};
use crate::trainers::{train_local, Algorithm, BatchAudit, GroupSigmaCache, NoiseCalibration, TrainContext, TrainerConfig};
use crate::{Error, Result};

/// Which subject cardinality HiGradAvgDP uses as its sampling multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectMultiplierMode {
    /// Largest number of items of any subject on the user (conservative).
    #[default]
    Max,
    /// Mean number of items per subject on the user.
    Expected,
}

impl std::str::FromStr for SubjectMultiplierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "expected" => Ok(Self::Expected),
            _ => Err(Error::InvalidConfig(format!("unknown subject multiplier mode {s:?}; expected max or expected"))),
        }
    }
}

impl std::fmt::Display for SubjectMultiplierMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Max => "max",
            Self::Expected => "expected",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub algorithm: Algorithm,
    /// Total budget; required for the private algorithms.
    pub budget: Option<PrivacyBudget>,
    pub rounds: usize,
    pub users_per_round: usize,
    pub mode: HorizontalMode,
    pub batch_size: usize,
    pub batches_per_round: usize,
    /// Per-user replacements for `batches_per_round`.
    pub batches_per_user: BTreeMap<usize, usize>,
    pub clip_norm: f64,
    pub learning_rate: f64,
    pub subject_multiplier_mode: SubjectMultiplierMode,
    pub constants: ReferenceConstants,
    /// Forces every noise multiplier. Test hook.
    pub sigma_override: Option<f64>,
    pub seed: u64,
}

/// Rounds to execute under horizontal composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub total_rounds_configured: usize,
    pub effective_rounds: usize,
    pub users_per_round: usize,
    pub mode: HorizontalMode,
}

impl RoundPlan {
    /// Subject-level algorithms run `ceil(R / sqrt(s))` rounds in round
    /// reduction mode; everything else runs all `R`.
    pub fn new(algorithm: Algorithm, rounds: usize, users_per_round: usize, mode: HorizontalMode) -> Result<Self> {
        let subject_level = matches!(algorithm, Algorithm::LocalGroupDp | Algorithm::HiGradAvgDp | Algorithm::UserLdp);
        let h = plan_horizontal(rounds, if subject_level { users_per_round } else { 1 }, mode)?;
        Ok(Self {
            total_rounds_configured: rounds,
            effective_rounds: h.effective_rounds,
            users_per_round,
            mode,
        })
    }
}

/// A user's trainer configuration together with the accountant output it
/// was derived from.
#[derive(Debug, Clone)]
pub struct UserStamp {
    pub user: usize,
    pub trainer: TrainerConfig,
    pub plan: Option<NoisePlan>,
    pub subject_multiplier: Option<f64>,
}

/// Solves the noise of every user for the shared budget.
///
/// Users differ in dataset size (hence sampling fraction) and possibly in
/// batches per round, so each gets its own noise multiplier; all of them
/// incur the same per-round privacy loss.
pub fn stamp_users(layout: &FederationLayout, config: &FederationConfig) -> Result<Vec<UserStamp>> {
    let algorithm = config.algorithm;
    (0..layout.n_users())
        .map(|user| {
            let dataset = layout
                .user(user)
                .ok_or_else(|| Error::EmptyDataset(format!("user {user} holds no items")))?;
            let batches = config.batches_per_user.get(&user).copied().unwrap_or(config.batches_per_round);
            let q = config.batch_size.min(dataset.len()) as f64 / dataset.len() as f64;
            let mut trainer = TrainerConfig {
                algorithm,
                batch_size: config.batch_size,
                batches_per_round: batches,
                clip_norm: config.clip_norm,
                learning_rate: config.learning_rate,
                noise: NoiseCalibration::None,
                sigma_override: config.sigma_override,
            };
            if !algorithm.is_private() {
                return Ok(UserStamp {
                    user,
                    trainer,
                    plan: None,
                    subject_multiplier: None,
                });
            }
            let budget = config
                .budget
                .ok_or_else(|| Error::InvalidConfig(format!("{algorithm} needs a privacy budget")))?;
            let schedule = StepSchedule {
                sampling_fraction: q,
                batches_per_round: batches,
                rounds: config.rounds,
                users_per_round: config.users_per_round,
                mode: config.mode,
            };
            let mut subject_multiplier = None;
            let mechanism = match algorithm {
                Algorithm::FedAvg => unreachable!("handled above"),
                Algorithm::LocalItemDp => Mechanism::ItemLevel,
                Algorithm::LocalGroupDp => Mechanism::GroupLevel { group_size: 1 },
                Algorithm::HiGradAvgDp => {
                    let k = match config.subject_multiplier_mode {
                        SubjectMultiplierMode::Max => max_subject_cardinality(dataset)? as f64,
                        SubjectMultiplierMode::Expected => dataset.mean_subject_cardinality(),
                    };
                    subject_multiplier = Some(k);
                    Mechanism::SubjectSampling { subject_multiplier: k }
                }
                Algorithm::UserLdp => Mechanism::UserLocal,
            };
            let plan = if config.sigma_override.is_some() {
                None
            } else {
                Some(plan_noise(budget, mechanism, &schedule, config.constants)?)
            };
            trainer.noise = match (&plan, algorithm) {
                (None, _) => NoiseCalibration::Fixed { sigma: 0.0 },
                (Some(p), Algorithm::LocalGroupDp) => {
                    let params = AccountingParams {
                        c1: config.constants.c1,
                        c2: config.constants.c2,
                        ..AccountingParams::new(q, p.steps_accounted)
                    };
                    NoiseCalibration::PerGroupSize(Arc::new(GroupSigmaCache::new(budget, params)))
                }
                (Some(p), _) => NoiseCalibration::Fixed { sigma: p.sigma },
            };
            Ok(UserStamp {
                user,
                trainer,
                plan,
                subject_multiplier,
            })
        })
        .collect()
}

/// `s` distinct user indices in `0..n`, ascending.
pub fn sample_users<R: Rng + ?Sized>(n: usize, s: usize, rng: &mut R) -> Result<Vec<usize>> {
    if s == 0 || s > n {
        return Err(Error::InvalidConfig(format!("cannot sample {s} of {n} users")));
    }
    let mut users = rand::seq::index::sample(rng, n, s).into_vec();
    users.sort_unstable();
    Ok(users)
}

/// Coordinate-wise mean of `params`.
pub fn federated_average(params: &[ParamVector]) -> Result<ParamVector> {
    let first = params
        .first()
        .ok_or_else(|| Error::InvalidConfig("nothing to average".into()))?;
    let mut acc = vec![0.0; first.len()];
    for p in params {
        if p.len() != first.len() || p.layout() != first.layout() {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                actual: p.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(p.values()) {
            *a += v;
        }
    }
    let s = params.len() as f64;
    acc.iter_mut().for_each(|a| *a /= s);
    ParamVector::with_layout(first.layout().to_vec(), acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub sampled_users: Vec<usize>,
    pub test_loss: f64,
    pub test_accuracy: f64,
    /// Mean largest-group size over the round's batches (group-DP only).
    pub mean_observed_z: Option<f64>,
    pub audits: Vec<BatchAudit>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct FederationOutcome {
    pub round_plan: RoundPlan,
    pub stamps: Vec<UserStamp>,
    pub reports: Vec<RoundReport>,
    pub params: ParamVector,
}

/// Runs the whole federation from freshly initialized parameters.
pub fn run_federation(layout: &FederationLayout, spec: &ModelSpec, config: &FederationConfig, eval: &[DataItem]) -> Result<FederationOutcome> {
    let params = init_params(spec, config.seed)?;
    run_federation_from(layout, spec, config, eval, params)
}

pub fn run_federation_from(
    layout: &FederationLayout,
    spec: &ModelSpec,
    config: &FederationConfig,
    eval: &[DataItem],
    mut params: ParamVector,
) -> Result<FederationOutcome> {
    spec.validate()?;
    if layout.d_in() != spec.d_in || layout.num_classes() != spec.num_classes {
        return Err(Error::InvalidConfig(format!(
            "model expects {} features and {} classes, data has {} and {}",
            spec.d_in,
            spec.num_classes,
            layout.d_in(),
            layout.num_classes()
        )));
    }
    let empty = layout.empty_users();
    if !empty.is_empty() {
        return Err(Error::InvalidConfig(format!("users {empty:?} hold no items; use more subjects, more items or a smaller alpha")));
    }
    if config.users_per_round == 0 || config.users_per_round > layout.n_users() {
        return Err(Error::InvalidConfig(format!(
            "users per round must be in 1..={}, got {}",
            layout.n_users(),
            config.users_per_round
        )));
    }
    let round_plan = RoundPlan::new(config.algorithm, config.rounds, config.users_per_round, config.mode)?;
    let stamps = stamp_users(layout, config)?;
    if config.algorithm == Algorithm::HiGradAvgDp {
        log::info!("higradavg_dp subject multiplier mode: {}", config.subject_multiplier_mode);
    }

    let mut reports = Vec::with_capacity(round_plan.effective_rounds);
    for round in 0..round_plan.effective_rounds {
        let started = Instant::now();
        let mut rng = stream(config.seed, StreamKey::new(Purpose::UserSelection).round(round));
        let users = sample_users(layout.n_users(), config.users_per_round, &mut rng)?;
        let broadcast = &params;
        let outcomes = users
            .par_iter()
            .map(|&user| {
                let dataset = layout.user(user).expect("checked non-empty");
                let ctx = TrainContext {
                    seed: config.seed,
                    user,
                    round,
                };
                train_local(&stamps[user].trainer, spec, broadcast, dataset, ctx).map_err(|e| Error::Round {
                    round,
                    user,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let locals: Vec<ParamVector> = outcomes.iter().map(|o| o.params.clone()).collect();
        params = federated_average(&locals)?;
        let audits: Vec<BatchAudit> = outcomes.into_iter().flat_map(|o| o.audits).collect();
        let zs: Vec<usize> = audits.iter().filter_map(|a| a.observed_z).collect();
        let mean_observed_z = (!zs.is_empty()).then(|| zs.iter().sum::<usize>() as f64 / zs.len() as f64);
        let ev = evaluate(spec, &params, eval)?;
        log::debug!("round {round}: loss {:.4} accuracy {:.4}", ev.loss, ev.accuracy);
        reports.push(RoundReport {
            round,
            sampled_users: users,
            test_loss: ev.loss,
            test_accuracy: ev.accuracy,
            mean_observed_z,
            audits,
            wall_time_secs: started.elapsed().as_secs_f64(),
        });
    }
    Ok(FederationOutcome {
        round_plan,
        stamps,
        reports,
        params,
    })
}
