use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{DataItem, FederationLayout, Registry};
use crate::rng::{stream, Purpose, StreamKey};
use crate::{Error, Result};

/// Places every item on a user drawn uniformly at random, independently per
/// item.
pub fn partition_uniform(registry: &Registry, n_users: usize, seed: u64) -> Result<FederationLayout> {
    check_inputs(registry, n_users)?;
    let rng = &mut stream(seed, StreamKey::new(Purpose::Partition));
    let mut per_user: Vec<Vec<DataItem>> = vec![Vec::new(); n_users];
    for item in registry.iter_items() {
        let user = rng.random_range(0..n_users);
        per_user[user].push(item.clone());
    }
    FederationLayout::new(registry.d_in(), registry.num_classes(), per_user)
}

/// Places items with subject-specific user preferences drawn from the power
/// distribution `P(x; alpha) = alpha x^(alpha - 1)` on `[0, 1]`.
///
/// For each subject, `n_users` samples `x = u^(1/alpha)` are binned into
/// `floor(x * n_users)`; the bin counts, relabelled through a per-subject
/// random permutation of users, are the multinomial weights used to place
/// that subject's items. `alpha = 1` gives every item a uniform marginal
/// placement; larger `alpha` piles a subject's items onto a single user.
pub fn partition_power(registry: &Registry, n_users: usize, alpha: f64, seed: u64) -> Result<FederationLayout> {
    check_inputs(registry, n_users)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidConfig(format!("power alpha must be positive and finite, got {alpha}")));
    }
    let rng = &mut stream(seed, StreamKey::new(Purpose::Partition));
    let mut per_user: Vec<Vec<DataItem>> = vec![Vec::new(); n_users];
    let mut relabel: Vec<usize> = (0..n_users).collect();
    for items in registry.subjects().values() {
        let weights = power_weights(rng, n_users, alpha, &mut relabel);
        let choose = WeightedIndex::new(&weights).expect("bin counts sum to n_users > 0");
        for item in items {
            per_user[choose.sample(rng)].push(item.clone());
        }
    }
    FederationLayout::new(registry.d_in(), registry.num_classes(), per_user)
}

fn power_weights<R: Rng + ?Sized>(rng: &mut R, n_users: usize, alpha: f64, relabel: &mut [usize]) -> Vec<u32> {
    relabel.shuffle(rng);
    let mut weights = vec![0u32; n_users];
    for _ in 0..n_users {
        let u: f64 = rng.random();
        let x = u.powf(1.0 / alpha);
        let bin = ((x * n_users as f64) as usize).min(n_users - 1);
        weights[relabel[bin]] += 1;
    }
    weights
}

fn check_inputs(registry: &Registry, n_users: usize) -> Result<()> {
    if n_users == 0 {
        return Err(Error::InvalidConfig("n_users must be at least 1".into()));
    }
    if registry.is_empty() {
        return Err(Error::EmptyDataset("cannot partition an empty registry".into()));
    }
    Ok(())
}

/// Splits each subject's items into a training part (fraction `train`) and a
/// held-out part, by independent per-item coin flips.
pub fn split_holdout(registry: &Registry, train: f64, seed: u64) -> Result<(Registry, Registry)> {
    if !(train > 0.0 && train < 1.0) {
        return Err(Error::InvalidConfig(format!("train fraction must be in (0, 1), got {train}")));
    }
    let rng = &mut stream(seed, StreamKey::new(Purpose::Split));
    let (mut kept, mut held) = (Vec::new(), Vec::new());
    for item in registry.iter_items() {
        if rng.random::<f64>() < train {
            kept.push(item.clone());
        } else {
            held.push(item.clone());
        }
    }
    if kept.is_empty() || held.is_empty() {
        return Err(Error::EmptyDataset("train/holdout split left one side empty".into()));
    }
    Ok((
        Registry::new(registry.d_in(), registry.num_classes(), kept)?,
        Registry::new(registry.d_in(), registry.num_classes(), held)?,
    ))
}
