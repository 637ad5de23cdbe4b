use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataItem, Registry, SubjectId};
use crate::rng::{stream, Purpose, StreamKey};
use crate::{Error, Result};

/// Distribution of the number of items each subject owns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ItemsPerSubject {
    Constant { count: usize },
    /// Uniform over `min..=max`.
    Uniform { min: usize, max: usize },
    /// `1 + Poisson(mean - 1)`: never zero, with the requested mean.
    ShiftedPoisson { mean: f64 },
}

impl ItemsPerSubject {
    fn validate(&self) -> Result<()> {
        match *self {
            ItemsPerSubject::Constant { count: 0 } => Err(Error::InvalidConfig(
                "items per subject must be at least 1".into(),
            )),
            ItemsPerSubject::Uniform { min, max } if min == 0 || min > max => {
                Err(Error::InvalidConfig(format!(
                    "items per subject range {min}..={max} must be non-empty and start at 1 or more"
                )))
            }
            ItemsPerSubject::ShiftedPoisson { mean } if !(mean >= 1.0) || !mean.is_finite() => {
                Err(Error::InvalidConfig(format!(
                    "mean items per subject must be finite and at least 1, got {mean}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ItemsPerSubject::Constant { count } => count as f64,
            ItemsPerSubject::Uniform { min, max } => (min + max) as f64 / 2.0,
            ItemsPerSubject::ShiftedPoisson { mean } => mean,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            ItemsPerSubject::Constant { count } => count,
            ItemsPerSubject::Uniform { min, max } => rng.random_range(min..=max),
            ItemsPerSubject::ShiftedPoisson { mean } => {
                if mean == 1.0 {
                    1
                } else {
                    let extra: f64 = Poisson::new(mean - 1.0).expect("validated mean").sample(rng);
                    1 + extra as usize
                }
            }
        }
    }
}

/// Parameters of the synthetic subject-structured classification task.
///
/// Each class has a Gaussian centroid; each subject carries a private mean
/// offset added to all of its items, so subject identity is recoverable from
/// the data and subject-level leakage is a meaningful concern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub items_per_subject: ItemsPerSubject,
    pub d_in: usize,
    pub num_classes: usize,
    /// Scale of the class centroids.
    pub class_separation: f64,
    /// Subject offset std as a multiple of `class_separation`.
    pub subject_offset_scale: f64,
    /// Per-item isotropic noise std.
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n_subjects: usize, items_per_subject: ItemsPerSubject, d_in: usize, num_classes: usize, seed: u64) -> Self {
        Self {
            n_subjects,
            items_per_subject,
            d_in,
            num_classes,
            class_separation: 2.0,
            subject_offset_scale: 0.5,
            noise_std: 1.0,
            seed,
        }
    }
}

/// Draws a registry of subject-tagged items. Deterministic given the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Registry> {
    if spec.n_subjects == 0 {
        return Err(Error::InvalidConfig("n_subjects must be at least 1".into()));
    }
    if spec.num_classes < 2 {
        return Err(Error::InvalidConfig("num_classes must be at least 2".into()));
    }
    if spec.d_in == 0 {
        return Err(Error::InvalidConfig("d_in must be at least 1".into()));
    }
    for (name, v) in [
        ("class_separation", spec.class_separation),
        ("subject_offset_scale", spec.subject_offset_scale),
        ("noise_std", spec.noise_std),
    ] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidConfig(format!("{name} must be finite and non-negative")));
        }
    }
    spec.items_per_subject.validate()?;

    let rng = &mut stream(spec.seed, StreamKey::new(Purpose::Synthetic));
    let centroids: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| gaussian_vec(rng, spec.d_in, spec.class_separation))
        .collect();
    let offset_std = spec.subject_offset_scale * spec.class_separation;

    let mut items = Vec::new();
    for s in 0..spec.n_subjects {
        let subject = SubjectId(s as u64);
        let offset = gaussian_vec(rng, spec.d_in, offset_std);
        let count = spec.items_per_subject.draw(rng);
        for _ in 0..count {
            let label = rng.random_range(0..spec.num_classes);
            let features = centroids[label]
                .iter()
                .zip(&offset)
                .map(|(c, o)| {
                    let z: f64 = StandardNormal.sample(rng);
                    c + o + spec.noise_std * z
                })
                .collect();
            items.push(DataItem {
                features,
                label,
                subject,
            });
        }
    }
    Registry::new(spec.d_in, spec.num_classes, items)
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize, std: f64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; dim];
    }
    let normal = Normal::new(0.0, std).expect("std validated");
    (0..dim).map(|_| normal.sample(rng)).collect()
}
