//! Group privacy: scaling an item-level guarantee to groups of `k` items.

use serde::{Deserialize, Serialize};

use super::PrivacyBudget;
use crate::{Error, Result};

/// Which failure-probability bound to use for a group of size `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupVariant {
    /// `k e^{(k-1) eps} delta`
    Loose,
    /// `(e^{k eps} - 1) / (e^{eps} - 1) delta`, the geometric-sum bound.
    Tight,
}

/// A group-level guarantee. Unlike [`PrivacyBudget`], `delta` may reach or
/// exceed 1, in which case the guarantee is vacuous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupPrivacy {
    pub epsilon: f64,
    pub delta: f64,
    pub log_delta: f64,
}

impl GroupPrivacy {
    pub fn is_meaningful(&self) -> bool {
        self.delta < 1.0
    }
}

/// `ln(e^x - 1)` for `x > 0` without overflow.
fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// Group guarantee implied by an (epsilon, delta) guarantee for groups of
/// `k` items.
pub fn group_dp_convert(base: PrivacyBudget, k: usize, variant: GroupVariant) -> Result<GroupPrivacy> {
    if k == 0 {
        return Err(Error::InvalidPrivacy("group size must be at least 1".into()));
    }
    if k == 1 {
        return Ok(GroupPrivacy {
            epsilon: base.epsilon(),
            delta: base.delta(),
            log_delta: base.delta().ln(),
        });
    }
    let (eps, kf) = (base.epsilon(), k as f64);
    let log_factor = match variant {
        GroupVariant::Loose => kf.ln() + (kf - 1.0) * eps,
        GroupVariant::Tight => ln_expm1(kf * eps) - ln_expm1(eps),
    };
    let log_delta = log_factor + base.delta().ln();
    let delta = log_delta.exp();
    if !delta.is_finite() {
        return Err(Error::Overflow(format!(
            "group delta e^{log_delta:.3} for k = {k}, epsilon = {eps} exceeds f64 range"
        )));
    }
    Ok(GroupPrivacy {
        epsilon: kf * eps,
        delta,
        log_delta,
    })
}

/// Per-minibatch (epsilon, delta) that yields the total `(E, D)` for groups
/// of size `z`: `(E / z, D / (z e^{(z-1) E / z}))`. Inverse of the loose
/// conversion.
pub fn group_budget_split(total: PrivacyBudget, z: usize) -> Result<PrivacyBudget> {
    if z == 0 {
        return Err(Error::InvalidPrivacy("group size must be at least 1".into()));
    }
    if z == 1 {
        return Ok(total);
    }
    let zf = z as f64;
    let epsilon = total.epsilon() / zf;
    let log_delta = total.delta().ln() - zf.ln() - (zf - 1.0) * epsilon;
    PrivacyBudget::new(epsilon, log_delta.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(eps: f64, delta: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps, delta).unwrap()
    }

    #[test]
    fn identity_at_one() {
        for v in [GroupVariant::Loose, GroupVariant::Tight] {
            let g = group_dp_convert(b(1.0, 1e-5), 1, v).unwrap();
            assert_eq!((g.epsilon, g.delta), (1.0, 1e-5));
        }
        assert_eq!(group_budget_split(b(4.0, 1e-5), 1).unwrap(), b(4.0, 1e-5));
    }

    #[test]
    fn pair_of_items() {
        // loose: 2e * 1e-5; tight: (e^2 - 1)/(e - 1) * 1e-5 = (e + 1) * 1e-5
        let e = std::f64::consts::E;
        let loose = group_dp_convert(b(1.0, 1e-5), 2, GroupVariant::Loose).unwrap();
        let tight = group_dp_convert(b(1.0, 1e-5), 2, GroupVariant::Tight).unwrap();
        assert!((loose.delta / (2.0 * e * 1e-5) - 1.0).abs() < 1e-13);
        assert!((tight.delta / ((e + 1.0) * 1e-5) - 1.0).abs() < 1e-13);
        assert!((loose.delta - 5.436_563_656_918_09e-5).abs() < 1e-15);
        assert!((tight.delta - 3.718_281_828_459_045e-5).abs() < 1e-15);
        assert_eq!(loose.epsilon, 2.0);
    }

    #[test]
    fn three_way_split_cuts_epsilon() {
        let split = group_budget_split(b(4.0, 1e-5), 3).unwrap();
        assert!((split.epsilon() - 4.0 / 3.0).abs() < 1e-15);
        let back = group_dp_convert(split, 3, GroupVariant::Loose).unwrap();
        assert!((back.epsilon - 4.0).abs() < 1e-12 * 4.0);
        assert!((back.delta / 1e-5 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overflow_is_an_error() {
        let r = group_dp_convert(b(50.0, 1e-5), 64, GroupVariant::Loose);
        assert!(matches!(r, Err(Error::Overflow(_))));
    }

    #[test]
    fn zero_group_rejected() {
        assert!(group_dp_convert(b(1.0, 1e-5), 0, GroupVariant::Tight).is_err());
        assert!(group_budget_split(b(1.0, 1e-5), 0).is_err());
    }
}
