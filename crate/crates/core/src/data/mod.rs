//! Subjects, data items, per-user datasets and minibatch sampling.

mod csv;
mod partition;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use self::csv::{load_csv, read_csv, CsvSchema};
pub use self::partition::{partition_power, partition_uniform, split_holdout};
pub use self::synthetic::{generate_synthetic, ItemsPerSubject, SyntheticSpec};

/// Identifier of a data subject, stable for a whole federation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(pub u64);

impl std::fmt::Display for SubjectId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataItem {
    pub features: Vec<f64>,
    pub label: usize,
    pub subject: SubjectId,
}

/// All items of a run grouped by subject, before placement on users.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    d_in: usize,
    num_classes: usize,
    subjects: BTreeMap<SubjectId, Vec<DataItem>>,
}

impl Registry {
    /// Groups `items` by subject, checking feature dimension and labels.
    pub fn new(d_in: usize, num_classes: usize, items: Vec<DataItem>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be at least 2, got {num_classes}"
            )));
        }
        let mut subjects: BTreeMap<SubjectId, Vec<DataItem>> = BTreeMap::new();
        for (i, item) in items.into_iter().enumerate() {
            check_item(&item, d_in, num_classes).map_err(|msg| {
                Error::InvalidConfig(format!("item {i}: {msg}"))
            })?;
            subjects.entry(item.subject).or_default().push(item);
        }
        Ok(Self {
            d_in,
            num_classes,
            subjects,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn subjects(&self) -> &BTreeMap<SubjectId, Vec<DataItem>> {
        &self.subjects
    }

    pub fn subject_count(&self) -> usize {
        self.subjects.len()
    }

    pub fn total_items(&self) -> usize {
        self.subjects.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_items() == 0
    }

    /// Items in subject order, then insertion order within a subject.
    pub fn iter_items(&self) -> impl Iterator<Item = &DataItem> {
        self.subjects.values().flatten()
    }

    /// Flattens the registry into a single dataset (centralized training,
    /// evaluation sets).
    pub fn to_dataset(&self) -> Result<SubjectDataset> {
        SubjectDataset::new(self.iter_items().cloned().collect())
    }
}

fn check_item(item: &DataItem, d_in: usize, num_classes: usize) -> std::result::Result<(), String> {
    if item.features.len() != d_in {
        return Err(format!(
            "feature dimension {} does not match {d_in}",
            item.features.len()
        ));
    }
    if item.label >= num_classes {
        return Err(format!("label {} out of range for {num_classes} classes", item.label));
    }
    if item.features.iter().any(|x| !x.is_finite()) {
        return Err("non-finite feature".to_string());
    }
    Ok(())
}

/// The dataset held by one federation user.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDataset {
    items: Vec<DataItem>,
    subject_index: BTreeMap<SubjectId, Vec<usize>>,
}

impl SubjectDataset {
    pub fn new(items: Vec<DataItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyDataset("a subject dataset needs at least one item".into()));
        }
        let mut subject_index: BTreeMap<SubjectId, Vec<usize>> = BTreeMap::new();
        for (pos, item) in items.iter().enumerate() {
            subject_index.entry(item.subject).or_default().push(pos);
        }
        Ok(Self {
            items,
            subject_index,
        })
    }

    pub fn items(&self) -> &[DataItem] {
        &self.items
    }

    pub fn item(&self, pos: usize) -> &DataItem {
        &self.items[pos]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn subject_index(&self) -> &BTreeMap<SubjectId, Vec<usize>> {
        &self.subject_index
    }

    pub fn subject_count(&self) -> usize {
        self.subject_index.len()
    }

    /// Mean number of items per subject present in this dataset.
    pub fn mean_subject_cardinality(&self) -> f64 {
        self.items.len() as f64 / self.subject_index.len() as f64
    }
}

/// Subject datasets of every user in a federation.
#[derive(Debug, Clone, PartialEq)]
pub struct FederationLayout {
    d_in: usize,
    num_classes: usize,
    user_datasets: Vec<Option<SubjectDataset>>,
    subjects: BTreeSet<SubjectId>,
}

impl FederationLayout {
    /// Builds a layout from per-user item lists. A user may end up with no
    /// items (skewed partitions do this); see [`FederationLayout::empty_users`].
    pub fn new(d_in: usize, num_classes: usize, per_user: Vec<Vec<DataItem>>) -> Result<Self> {
        if per_user.is_empty() {
            return Err(Error::InvalidConfig("a federation needs at least one user".into()));
        }
        let mut subjects = BTreeSet::new();
        let mut user_datasets = Vec::with_capacity(per_user.len());
        for (user, items) in per_user.into_iter().enumerate() {
            if items.is_empty() {
                log::warn!("user {user} received no items");
                user_datasets.push(None);
                continue;
            }
            subjects.extend(items.iter().map(|it| it.subject));
            user_datasets.push(Some(SubjectDataset::new(items)?));
        }
        Ok(Self {
            d_in,
            num_classes,
            user_datasets,
            subjects,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_datasets.len()
    }

    /// Datasets of the users that hold at least one item.
    pub fn user_datasets(&self) -> impl Iterator<Item = &SubjectDataset> {
        self.user_datasets.iter().flatten()
    }

    /// `None` when `user` holds no items.
    pub fn user(&self, user: usize) -> Option<&SubjectDataset> {
        self.user_datasets[user].as_ref()
    }

    pub fn empty_users(&self) -> Vec<usize> {
        self.user_datasets
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.is_none().then_some(i))
            .collect()
    }

    pub fn total_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn subjects(&self) -> &BTreeSet<SubjectId> {
        &self.subjects
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn total_items(&self) -> usize {
        self.user_datasets().map(SubjectDataset::len).sum()
    }

    /// True when no subject has items at more than one user, the only case
    /// where parallel composition across users would apply.
    pub fn subjects_are_user_disjoint(&self) -> bool {
        let mut owner: BTreeMap<SubjectId, usize> = BTreeMap::new();
        for (user, ds) in self.user_datasets.iter().enumerate() {
            let Some(ds) = ds else { continue };
            for subject in ds.subject_index().keys() {
                if let Some(prev) = owner.insert(*subject, user) {
                    if prev != user {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Positions of one sampled minibatch within a [`SubjectDataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    positions: Vec<usize>,
    sampling_fraction: f64,
    whole_dataset: bool,
}

impl Minibatch {
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// q = B / |D|, or 1 when the batch is the whole dataset.
    pub fn sampling_fraction(&self) -> f64 {
        self.sampling_fraction
    }

    /// Set when the requested size exceeded the dataset.
    pub fn is_whole_dataset(&self) -> bool {
        self.whole_dataset
    }
}

/// Samples `batch_size` distinct positions uniformly without replacement.
///
/// A request larger than the dataset yields the whole dataset with q = 1.
pub fn sample_minibatch<R: Rng + ?Sized>(
    dataset: &SubjectDataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<Minibatch> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    let n = dataset.len();
    if batch_size >= n {
        return Ok(Minibatch {
            positions: (0..n).collect(),
            sampling_fraction: 1.0,
            whole_dataset: batch_size > n,
        });
    }
    let mut positions = rand::seq::index::sample(rng, n, batch_size).into_vec();
    positions.sort_unstable();
    Ok(Minibatch {
        positions,
        sampling_fraction: batch_size as f64 / n as f64,
        whole_dataset: false,
    })
}

/// Largest number of batch items belonging to a single subject.
pub fn largest_group_count(dataset: &SubjectDataset, batch: &Minibatch) -> usize {
    group_sizes(dataset, batch).into_values().max().unwrap_or(0)
}

/// Item count per subject within `batch`.
pub fn group_sizes(dataset: &SubjectDataset, batch: &Minibatch) -> BTreeMap<SubjectId, usize> {
    let mut counts: BTreeMap<SubjectId, usize> = BTreeMap::new();
    for &pos in batch.positions() {
        *counts.entry(dataset.item(pos).subject).or_default() += 1;
    }
    counts
}

/// Largest number of items any subject holds in `dataset`.
pub fn max_subject_cardinality(dataset: &SubjectDataset) -> Result<usize> {
    dataset
        .subject_index()
        .values()
        .map(Vec::len)
        .max()
        .ok_or_else(|| Error::EmptyDataset("no subjects in dataset".into()))
}
