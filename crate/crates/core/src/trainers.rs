//! Local training procedures run by each sampled user in a round.
//!
//! Every trainer draws minibatch `t` of round `r` for user `u` from the stream
//! `(seed, u, r, t, Sampling)` and its Gaussian noise from
//! `(seed, u, r, t, Noise)`, so two trainers given the same context see the
//! same minibatches regardless of how much noise either one draws.
//!
//! Private trainers add noise to the *sum* of the clipped contributions and
//! then divide, as in
//!
//! ```text
//! g~ = (sum_i clip(g_i) + N(0, sigma^2 C^2 I)) / divisor
//! theta <- theta - eta * g~
//! ```
//!
//! where the divisor is the minibatch size (item and group trainers), the
//! number of distinct subjects in the batch (hierarchical averaging) or 1
//! (user-level local DP, which clips the whole batch gradient at once).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::accountant::{group_budget_split, solve_sigma, AccountingParams, PrivacyBudget};
use crate::data::{group_sizes, sample_minibatch, DataItem, SubjectDataset, SubjectId};
use crate::models::{add_assign, apply_update_in_place, clip_in_place, l2_norm, per_example_gradients, ModelSpec, ParamVector};
use crate::rng::{stream, Purpose, StreamKey};
use crate::{Error, Result};

pub const AUDIT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[serde(rename = "fedavg")]
    FedAvg,
    LocalItemDp,
    LocalGroupDp,
    #[serde(rename = "higradavg_dp")]
    HiGradAvgDp,
    UserLdp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::FedAvg,
        Algorithm::LocalItemDp,
        Algorithm::LocalGroupDp,
        Algorithm::HiGradAvgDp,
        Algorithm::UserLdp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::FedAvg => "fedavg",
            Algorithm::LocalItemDp => "local_item_dp",
            Algorithm::LocalGroupDp => "local_group_dp",
            Algorithm::HiGradAvgDp => "higradavg_dp",
            Algorithm::UserLdp => "user_ldp",
        }
    }

    pub fn is_private(&self) -> bool {
        !matches!(self, Algorithm::FedAvg)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm {s:?}; expected one of fedavg, local_item_dp, local_group_dp, higradavg_dp, user_ldp")))
    }
}

/// Memoized `Z -> sigma_Z` for group-DP enforcement.
///
/// `sigma_Z` is the accountant's noise multiplier for the split budget
/// `(E/Z, D/(Z e^{(Z-1)E/Z}))` at the user's item sampling fraction.
#[derive(Debug)]
pub struct GroupSigmaCache {
    total: PrivacyBudget,
    params: AccountingParams,
    memo: Mutex<BTreeMap<usize, f64>>,
}

impl GroupSigmaCache {
    pub fn new(total: PrivacyBudget, params: AccountingParams) -> Self {
        Self {
            total,
            params,
            memo: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn sigma(&self, z: usize) -> Result<f64> {
        if let Some(s) = self.memo.lock().expect("sigma cache poisoned").get(&z) {
            return Ok(*s);
        }
        let budget = group_budget_split(self.total, z)?;
        let sigma = solve_sigma(budget, &self.params.with_group_size(z))?;
        self.memo.lock().expect("sigma cache poisoned").insert(z, sigma);
        Ok(sigma)
    }

    pub fn entries(&self) -> BTreeMap<usize, f64> {
        self.memo.lock().expect("sigma cache poisoned").clone()
    }

    pub fn params(&self) -> &AccountingParams {
        &self.params
    }
}

/// How the noise multiplier is chosen for each minibatch.
#[derive(Debug, Clone)]
pub enum NoiseCalibration {
    None,
    Fixed { sigma: f64 },
    PerGroupSize(Arc<GroupSigmaCache>),
}

#[derive(Debug, Clone)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    pub batch_size: usize,
    pub batches_per_round: usize,
    pub clip_norm: f64,
    pub learning_rate: f64,
    pub noise: NoiseCalibration,
    /// Forces every noise multiplier to this value. Test hook.
    pub sigma_override: Option<f64>,
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidConfig(format!("learning rate must be finite and non-negative, got {}", self.learning_rate)));
        }
        if self.algorithm.is_private() {
            if !(self.clip_norm > 0.0) || !self.clip_norm.is_finite() {
                return Err(Error::InvalidConfig(format!("clipping threshold must be positive, got {}", self.clip_norm)));
            }
            if matches!(self.noise, NoiseCalibration::None) && self.sigma_override.is_none() {
                return Err(Error::InvalidConfig(format!("{} needs a noise calibration", self.algorithm)));
            }
        }
        if let Some(s) = self.sigma_override {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::InvalidConfig(format!("sigma override must be finite and non-negative, got {s}")));
            }
        }
        Ok(())
    }

    fn sigma_for(&self, z: usize) -> Result<f64> {
        if let Some(s) = self.sigma_override {
            return Ok(s);
        }
        match &self.noise {
            NoiseCalibration::None => Ok(0.0),
            NoiseCalibration::Fixed { sigma } => Ok(*sigma),
            NoiseCalibration::PerGroupSize(cache) => cache.sigma(z),
        }
    }
}

/// Identifies the streams a local round draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainContext {
    pub seed: u64,
    pub user: usize,
    pub round: usize,
}

/// What happened in one minibatch step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAudit {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub round: usize,
    pub user: usize,
    pub batch: usize,
    pub batch_size: usize,
    pub sampling_fraction: f64,
    /// Largest per-subject group in the batch (group-DP trainer only).
    pub observed_z: Option<usize>,
    /// Distinct subjects in the batch (hierarchical averaging only).
    pub distinct_subjects: Option<usize>,
    pub sigma: f64,
    pub noise_std_used: f64,
    pub noise_norm: f64,
    pub mean_loss: f64,
    pub pre_clip_norm_max: f64,
    pub pre_clip_norm_mean: f64,
    /// Largest norm of any clipped unit: item gradients, subject averages or
    /// the whole-batch gradient depending on the trainer.
    pub post_clip_norm_max: f64,
    pub clipped_count: usize,
    /// Largest per-subject averaged gradient norm (hierarchical averaging only).
    pub subject_avg_norm_max: Option<f64>,
    /// `eta * T * C`, bound on the clean part of a round update (user-level LDP only).
    pub round_sensitivity: Option<f64>,
    /// Norm of the parameter change made by this step.
    pub update_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub params: ParamVector,
    pub audits: Vec<BatchAudit>,
}

/// Runs the trainer selected by `config.algorithm`.
pub fn train_local(config: &TrainerConfig, spec: &ModelSpec, params: &ParamVector, dataset: &SubjectDataset, ctx: TrainContext) -> Result<LocalOutcome> {
    config.validate()?;
    let mut params = params.clone();
    let mut audits = Vec::with_capacity(config.batches_per_round);
    for batch in 0..config.batches_per_round {
        let audit = step(config, spec, &mut params, dataset, ctx, batch)?;
        audits.push(audit);
    }
    Ok(LocalOutcome { params, audits })
}

pub fn train_fedavg_local(config: &TrainerConfig, spec: &ModelSpec, params: &ParamVector, dataset: &SubjectDataset, ctx: TrainContext) -> Result<LocalOutcome> {
    expect_algorithm(config, Algorithm::FedAvg)?;
    train_local(config, spec, params, dataset, ctx)
}

pub fn train_local_item_dp(config: &TrainerConfig, spec: &ModelSpec, params: &ParamVector, dataset: &SubjectDataset, ctx: TrainContext) -> Result<LocalOutcome> {
    expect_algorithm(config, Algorithm::LocalItemDp)?;
    train_local(config, spec, params, dataset, ctx)
}

pub fn train_local_group_dp(config: &TrainerConfig, spec: &ModelSpec, params: &ParamVector, dataset: &SubjectDataset, ctx: TrainContext) -> Result<LocalOutcome> {
    expect_algorithm(config, Algorithm::LocalGroupDp)?;
    train_local(config, spec, params, dataset, ctx)
}

pub fn train_higradavg_dp(config: &TrainerConfig, spec: &ModelSpec, params: &ParamVector, dataset: &SubjectDataset, ctx: TrainContext) -> Result<LocalOutcome> {
    expect_algorithm(config, Algorithm::HiGradAvgDp)?;
    train_local(config, spec, params, dataset, ctx)
}

pub fn train_userldp(config: &TrainerConfig, spec: &ModelSpec, params: &ParamVector, dataset: &SubjectDataset, ctx: TrainContext) -> Result<LocalOutcome> {
    expect_algorithm(config, Algorithm::UserLdp)?;
    train_local(config, spec, params, dataset, ctx)
}

fn expect_algorithm(config: &TrainerConfig, algorithm: Algorithm) -> Result<()> {
    if config.algorithm != algorithm {
        return Err(Error::InvalidConfig(format!("trainer for {algorithm} called with a {} config", config.algorithm)));
    }
    Ok(())
}

#[derive(Default)]
struct NormStats {
    max: f64,
    sum: f64,
    count: usize,
    clipped: usize,
    post_max: f64,
}

impl NormStats {
    fn record(&mut self, pre: f64, clipped: bool, post: f64) {
        self.max = self.max.max(pre);
        self.sum += pre;
        self.count += 1;
        self.clipped += usize::from(clipped);
        self.post_max = self.post_max.max(post);
    }

    fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

/// Adds `N(0, std^2)` to every coordinate of `v`; returns the noise norm.
/// A zero standard deviation leaves `v` untouched.
fn add_gaussian_noise(v: &mut [f64], std: f64, ctx: TrainContext, batch: usize) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    let mut rng = stream(ctx.seed, StreamKey::new(Purpose::Noise).user(ctx.user).round(ctx.round).batch(batch));
    let mut sq = 0.0;
    for x in v.iter_mut() {
        let n: f64 = rng.sample::<f64, _>(StandardNormal) * std;
        sq += n * n;
        *x += n;
    }
    sq.sqrt()
}

fn step(config: &TrainerConfig, spec: &ModelSpec, params: &mut ParamVector, dataset: &SubjectDataset, ctx: TrainContext, batch: usize) -> Result<BatchAudit> {
    let mut rng = stream(ctx.seed, StreamKey::new(Purpose::Sampling).user(ctx.user).round(ctx.round).batch(batch));
    let mb = sample_minibatch(dataset, config.batch_size, &mut rng)?;
    let items: Vec<&DataItem> = mb.positions().iter().map(|&p| dataset.item(p)).collect();
    let mut grads = per_example_gradients(spec, params, &items)?;
    let mean_loss = grads.iter().map(|g| g.loss).sum::<f64>() / grads.len() as f64;
    if !mean_loss.is_finite() {
        return Err(Error::NonFiniteLoss { round: ctx.round, batch });
    }

    let d = params.len();
    let c = config.clip_norm;
    let mut stats = NormStats::default();
    let mut observed_z = None;
    let mut distinct_subjects = None;
    let mut subject_avg_norm_max = None;
    let mut round_sensitivity = None;

    let mut sum = vec![0.0; d];
    let (divisor, sigma) = match config.algorithm {
        Algorithm::FedAvg => {
            for g in &grads {
                stats.record(g.pre_clip_norm, false, g.pre_clip_norm);
                add_assign(&mut sum, &g.grad);
            }
            (grads.len() as f64, 0.0)
        }
        Algorithm::LocalItemDp | Algorithm::LocalGroupDp => {
            for g in &mut grads {
                g.clip(c);
                stats.record(g.pre_clip_norm, g.clipped, l2_norm(&g.grad));
                add_assign(&mut sum, &g.grad);
            }
            let z = if config.algorithm == Algorithm::LocalGroupDp {
                let z = group_sizes(dataset, &mb).into_values().max().unwrap_or(1);
                observed_z = Some(z);
                z
            } else {
                1
            };
            (grads.len() as f64, config.sigma_for(z)?)
        }
        Algorithm::HiGradAvgDp => {
            // Subjects in order of first appearance in the batch.
            let mut slot: BTreeMap<SubjectId, usize> = BTreeMap::new();
            let mut per_subject: Vec<(Vec<f64>, usize)> = Vec::new();
            for g in &mut grads {
                g.clip(c);
                stats.record(g.pre_clip_norm, g.clipped, l2_norm(&g.grad));
                let i = *slot.entry(g.subject).or_insert_with(|| {
                    per_subject.push((vec![0.0; d], 0));
                    per_subject.len() - 1
                });
                add_assign(&mut per_subject[i].0, &g.grad);
                per_subject[i].1 += 1;
            }
            let mut avg_max: f64 = 0.0;
            for (subject_sum, count) in per_subject.iter_mut() {
                let n = *count as f64;
                subject_sum.iter_mut().for_each(|v| *v /= n);
                avg_max = avg_max.max(l2_norm(subject_sum));
                add_assign(&mut sum, subject_sum);
            }
            subject_avg_norm_max = Some(avg_max);
            distinct_subjects = Some(per_subject.len());
            (per_subject.len() as f64, config.sigma_for(1)?)
        }
        Algorithm::UserLdp => {
            let n = grads.len() as f64;
            for g in &grads {
                add_assign(&mut sum, &g.grad);
            }
            sum.iter_mut().for_each(|v| *v /= n);
            let (pre, clipped) = clip_in_place(&mut sum, c);
            stats.record(pre, clipped, l2_norm(&sum));
            round_sensitivity = Some(config.learning_rate * config.batches_per_round as f64 * c);
            (1.0, config.sigma_for(1)?)
        }
    };

    let noise_std = sigma * c;
    let noise_norm = if config.algorithm.is_private() {
        add_gaussian_noise(&mut sum, noise_std, ctx, batch)
    } else {
        0.0
    };
    if divisor != 1.0 {
        sum.iter_mut().for_each(|v| *v /= divisor);
    }
    let before = params.clone();
    apply_update_in_place(params, &sum, config.learning_rate)?;
    let update_norm = l2_norm(&before.values().iter().zip(params.values()).map(|(a, b)| b - a).collect::<Vec<_>>());

    Ok(BatchAudit {
        schema_version: AUDIT_SCHEMA_VERSION,
        algorithm: config.algorithm,
        round: ctx.round,
        user: ctx.user,
        batch,
        batch_size: mb.len(),
        sampling_fraction: mb.sampling_fraction(),
        observed_z,
        distinct_subjects,
        sigma,
        noise_std_used: if config.algorithm.is_private() { noise_std } else { 0.0 },
        noise_norm,
        mean_loss,
        pre_clip_norm_max: stats.max,
        pre_clip_norm_mean: stats.mean(),
        post_clip_norm_max: stats.post_max,
        clipped_count: stats.clipped,
        subject_avg_norm_max,
        round_sensitivity,
        update_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::init_params;

    fn dataset(subjects: &[u64]) -> SubjectDataset {
        let items = subjects
            .iter()
            .enumerate()
            .map(|(i, &s)| DataItem {
                features: vec![(i as f64).sin(), (i as f64).cos()],
                label: i % 2,
                subject: SubjectId(s),
            })
            .collect();
        SubjectDataset::new(items).unwrap()
    }

    fn config(algorithm: Algorithm, sigma: f64) -> TrainerConfig {
        TrainerConfig {
            algorithm,
            batch_size: 4,
            batches_per_round: 3,
            clip_norm: 0.1,
            learning_rate: 0.5,
            noise: if algorithm.is_private() { NoiseCalibration::Fixed { sigma } } else { NoiseCalibration::None },
            sigma_override: None,
        }
    }

    const CTX: TrainContext = TrainContext { seed: 3, user: 1, round: 2 };

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert!("dp_sgd".parse::<Algorithm>().is_err());
    }

    #[test]
    fn zero_batches_leave_params() {
        let spec = ModelSpec::logistic(2, 2, true);
        let p = init_params(&spec, 0).unwrap();
        let cfg = TrainerConfig {
            batches_per_round: 0,
            ..config(Algorithm::FedAvg, 0.0)
        };
        let out = train_fedavg_local(&cfg, &spec, &p, &dataset(&[0, 1, 2]), CTX).unwrap();
        assert_eq!(out.params, p);
        assert!(out.audits.is_empty());
    }

    #[test]
    fn audit_fields_follow_algorithm() {
        let spec = ModelSpec::logistic(2, 2, true);
        let p = init_params(&spec, 0).unwrap();
        let ds = dataset(&[0, 0, 0, 1, 2, 2, 3, 4]);
        for a in Algorithm::ALL {
            let out = train_local(&config(a, 1.0), &spec, &p, &ds, CTX).unwrap();
            assert_eq!(out.audits.len(), 3);
            for au in &out.audits {
                assert_eq!(au.observed_z.is_some(), a == Algorithm::LocalGroupDp);
                assert_eq!(au.distinct_subjects.is_some(), a == Algorithm::HiGradAvgDp);
                assert_eq!(au.round_sensitivity.is_some(), a == Algorithm::UserLdp);
                if a.is_private() {
                    assert!((au.noise_std_used - 0.1).abs() < 1e-15);
                    assert!(au.post_clip_norm_max <= 0.1 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn wrong_trainer_is_rejected() {
        let spec = ModelSpec::logistic(2, 2, true);
        let p = init_params(&spec, 0).unwrap();
        assert!(train_userldp(&config(Algorithm::FedAvg, 0.0), &spec, &p, &dataset(&[0]), CTX).is_err());
    }

    #[test]
    fn private_trainer_needs_noise() {
        let cfg = TrainerConfig {
            noise: NoiseCalibration::None,
            ..config(Algorithm::LocalItemDp, 1.0)
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainerConfig {
            clip_norm: 0.0,
            ..config(Algorithm::LocalItemDp, 1.0)
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn group_cache_memoizes_and_grows_with_z() {
        let total = PrivacyBudget::new(4.0, 1e-5).unwrap();
        let cache = GroupSigmaCache::new(total, AccountingParams::new(0.1, 500));
        let s1 = cache.sigma(1).unwrap();
        let s3 = cache.sigma(3).unwrap();
        assert!(s3 > s1);
        assert_eq!(cache.entries().len(), 2);
        assert_eq!(cache.sigma(3).unwrap(), s3);
        assert_eq!(s1, solve_sigma(total, &AccountingParams::new(0.1, 500)).unwrap());
    }
}
