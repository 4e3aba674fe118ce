//! Hallucination elimination, step 6 of the cycle.
//!
//! The filter judges whole sequences: one bad request discards the sequence,
//! because composite context is the point of the corpus — a sequence with a
//! hallucinated middle step is not evidence of anything.

use crate::plan::PlannedSequence;
use crate::role::Role;
use bacalarm_core::traffic::{normalize_path, TrafficSequence};
use serde::{Deserialize, Serialize};

/// Statuses a malicious sequence may contain and still be kept. Benign
/// sequences are held to `200` alone.
pub const MALICIOUS_ACCEPTED: [u16; 3] = [200, 401, 403];

/// Why a sequence was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum DiscardReason {
    /// Record count differs from plan step count.
    LengthMismatch,
    /// A step never completed (synthetic status 0).
    Incomplete { index: usize },
    /// Executed (method, path) differs from the planned step.
    IntentContradiction { index: usize },
    /// A status outside the role's accepted set, e.g. 400 or 404.
    ErrorStatus { index: usize, status: u16 },
}

/// Filter verdict for one executed sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOutcome {
    Keep,
    Discard(DiscardReason),
}

impl FilterOutcome {
    pub fn is_keep(&self) -> bool {
        matches!(self, FilterOutcome::Keep)
    }
}

/// Applies the elimination criteria to an executed sequence.
///
/// Benign sequences are kept iff every record returned 200. Malicious
/// sequences are kept iff every record returned 200, 401, or 403 — probing
/// denials are real attack texture, but 4xx client errors mean the planner
/// invented an endpoint. Any executed (method, path) that differs from its
/// planned step is an intent contradiction regardless of status.
pub fn filter_hallucinations(sequence: &TrafficSequence, plan: &PlannedSequence) -> FilterOutcome {
    if sequence.records.len() != plan.steps.len() {
        return FilterOutcome::Discard(DiscardReason::LengthMismatch);
    }
    for (index, (record, step)) in sequence.records.iter().zip(&plan.steps).enumerate() {
        if record.status == 0 {
            return FilterOutcome::Discard(DiscardReason::Incomplete { index });
        }
        let (planned_path, _) = match normalize_path(&step.path) {
            Ok(parts) => parts,
            Err(_) => return FilterOutcome::Discard(DiscardReason::IntentContradiction { index }),
        };
        if record.method != step.method || record.path != planned_path {
            return FilterOutcome::Discard(DiscardReason::IntentContradiction { index });
        }
        let accepted = match plan.role {
            Role::Benign => record.status == 200,
            Role::Malicious => MALICIOUS_ACCEPTED.contains(&record.status),
        };
        if !accepted {
            return FilterOutcome::Discard(DiscardReason::ErrorStatus {
                index,
                status: record.status,
            });
        }
    }
    FilterOutcome::Keep
}
