//! Composition across rounds and across the users averaged by the server.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How a plan compensates for subject-level loss composing over the `s`
/// users averaged in each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizontalMode {
    /// Keep the per-user noise, train for `ceil(R / sqrt(s))` rounds.
    RoundReduction,
    /// Keep `R` rounds, account for `s` times as many minibatches.
    MinibatchScaling,
}

impl std::fmt::Display for HorizontalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HorizontalMode::RoundReduction => "round_reduction",
            HorizontalMode::MinibatchScaling => "minibatch_scaling",
        })
    }
}

impl std::str::FromStr for HorizontalMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "round_reduction" => Ok(HorizontalMode::RoundReduction),
            "minibatch_scaling" => Ok(HorizontalMode::MinibatchScaling),
            other => Err(format!("unknown horizontal mode `{other}` (round_reduction | minibatch_scaling)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizontalPlan {
    pub mode: HorizontalMode,
    pub effective_rounds: usize,
    /// Factor applied to the accounted step count.
    pub step_multiplier: usize,
}

/// Per-round share of a total epsilon composed over `rounds`: `eps / sqrt(R)`.
pub fn apportion_per_round(total_epsilon: f64, rounds: usize) -> Result<f64> {
    if rounds == 0 {
        return Err(Error::InvalidConfig("rounds must be at least 1".into()));
    }
    Ok(total_epsilon / (rounds as f64).sqrt())
}

/// Smallest `r` with `r >= R / sqrt(s)`, computed exactly as `r^2 s >= R^2`.
fn ceil_div_sqrt(rounds: usize, s: usize) -> usize {
    let (r2, s) = (rounds as u128 * rounds as u128, s as u128);
    let approx = (rounds as f64 / (s as f64).sqrt()).ceil() as u128;
    let mut r = approx.saturating_sub(2);
    while r * r * s < r2 {
        r += 1;
    }
    r as usize
}

pub fn plan_horizontal(rounds: usize, users_per_round: usize, mode: HorizontalMode) -> Result<HorizontalPlan> {
    if rounds == 0 || users_per_round == 0 {
        return Err(Error::InvalidConfig("rounds and users per round must be at least 1".into()));
    }
    Ok(match mode {
        HorizontalMode::RoundReduction => HorizontalPlan {
            mode,
            effective_rounds: ceil_div_sqrt(rounds, users_per_round),
            step_multiplier: 1,
        },
        HorizontalMode::MinibatchScaling => HorizontalPlan {
            mode,
            effective_rounds: rounds,
            step_multiplier: users_per_round,
        },
    })
}
