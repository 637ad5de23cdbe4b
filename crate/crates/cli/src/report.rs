//! On-disk report formats and their readers.
//!
//! A run directory holds:
//!
//! | file | contents |
//! |------|----------|
//! | `resolved.cfg`, `resolved.json` | the full configuration used |
//! | `noise_plans.json` | accountant output per user |
//! | `rounds.jsonl` | one [`RoundRecord`] per executed round |
//! | `audits.jsonl` | one [`BatchAudit`] per local minibatch |
//! | `final.bin`, `final.json` | checkpoint of the final parameters |
//! | `summary.json` | [`RunSummary`] |
//! | `timings.csv` | wall-clock time per round (not deterministic) |
//!
//! Everything except `timings.csv` is byte-identical across runs of the same
//! configuration.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use subjectdp::accountant::{BoundBreakdown, UtilityBoundInputs};
use subjectdp::federation::RoundReport;
use subjectdp::trainers::{Algorithm, BatchAudit, AUDIT_SCHEMA_VERSION};

pub const ROUNDS_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// A round of the server loop, without its batch audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub schema_version: u32,
    pub round: usize,
    pub sampled_users: Vec<usize>,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub mean_observed_z: Option<f64>,
    pub batches: usize,
}

impl From<&RoundReport> for RoundRecord {
    fn from(r: &RoundReport) -> Self {
        Self {
            schema_version: ROUNDS_SCHEMA_VERSION,
            round: r.round,
            sampled_users: r.sampled_users.clone(),
            test_loss: r.test_loss,
            test_accuracy: r.test_accuracy,
            mean_observed_z: r.mean_observed_z,
            batches: r.audits.len(),
        }
    }
}

/// Inputs and values of the excess-loss bounds for a convex run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: UtilityBoundInputs,
    pub lipschitz_method: String,
    /// How `inputs.diameter` was obtained; no projection is performed, so it
    /// is an observed value rather than a constraint.
    pub diameter_method: String,
    pub local_group_dp: BoundBreakdown,
    pub user_ldp: BoundBreakdown,
    pub higradavg_dp: BoundBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub configured_rounds: usize,
    pub effective_rounds: usize,
    pub final_test_accuracy: f64,
    pub final_test_loss: f64,
    pub mean_observed_z: Option<f64>,
    pub total_batches: usize,
    /// Noise multiplier of user 0 (group trainers: at group size 1).
    pub sigma_user0: Option<f64>,
    pub subject_multiplier_user0: Option<f64>,
    pub bounds: Option<BoundReport>,
}

/// A JSON-lines reading error with the offending line.
#[derive(Debug, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct JsonlError {
    pub line: usize,
    pub message: String,
}

/// Reads one `T` per non-blank line.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| JsonlError {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| JsonlError {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Parses an audit stream and checks every record's schema version.
pub fn parse_audits<R: BufRead>(reader: R) -> Result<Vec<BatchAudit>, JsonlError> {
    let audits: Vec<BatchAudit> = read_jsonl(reader)?;
    if let Some((i, a)) = audits.iter().enumerate().find(|(_, a)| a.schema_version != AUDIT_SCHEMA_VERSION) {
        return Err(JsonlError {
            line: i + 1,
            message: format!("unsupported audit schema version {}", a.schema_version),
        });
    }
    Ok(audits)
}

pub fn parse_rounds<R: BufRead>(reader: R) -> Result<Vec<RoundRecord>, JsonlError> {
    let rounds: Vec<RoundRecord> = read_jsonl(reader)?;
    if let Some((i, r)) = rounds.iter().enumerate().find(|(_, r)| r.schema_version != ROUNDS_SCHEMA_VERSION) {
        return Err(JsonlError {
            line: i + 1,
            message: format!("unsupported rounds schema version {}", r.schema_version),
        });
    }
    Ok(rounds)
}

pub fn to_jsonl<T: Serialize>(records: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r).expect("report records serialize"));
        out.push('\n');
    }
    out
}

/// Number of batches per observed group size. Sizes between 1 and the
/// largest observed value are listed even when empty, up to a cap.
pub fn group_size_histogram(audits: &[BatchAudit]) -> Vec<(usize, usize)> {
    const DENSE_UP_TO: usize = 4096;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for z in audits.iter().filter_map(|a| a.observed_z) {
        *counts.entry(z).or_default() += 1;
    }
    if let Some(&max) = counts.keys().next_back() {
        if max <= DENSE_UP_TO {
            for z in 1..=max {
                counts.entry(z).or_default();
            }
        }
    }
    counts.into_iter().collect()
}
