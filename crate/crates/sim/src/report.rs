//! Generation accounting.

use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

/// Outcome counts for one generation run.
///
/// Counters are conserved: `attempts = kept + discarded_hallucination +
/// discarded_parse + incomplete`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationReport {
    /// Planning attempts that ran to a terminal outcome.
    pub attempts: u64,
    /// Sequences that survived the hallucination filter.
    pub kept: u64,
    /// Fully executed sequences the filter discarded.
    pub discarded_hallucination: u64,
    /// Attempts whose LLM reply never parsed into a valid plan.
    pub discarded_parse: u64,
    /// Sequences with a transport-failed step, excluded before filtering.
    pub incomplete: u64,
    /// Tokens billed by the LLM endpoint, as reported.
    pub llm_tokens: u64,
    /// Wall-clock duration of the run.
    pub wall_ms: u64,
}

impl GenerationReport {
    /// Checks counter conservation.
    pub fn conserved(&self) -> bool {
        self.attempts
            == self.kept + self.discarded_hallucination + self.discarded_parse + self.incomplete
    }
}

/// Lock-free accumulator shared by generation workers.
#[derive(Debug, Default)]
pub(crate) struct ReportCounters {
    pub attempts: AtomicU64,
    pub kept: AtomicU64,
    pub discarded_hallucination: AtomicU64,
    pub discarded_parse: AtomicU64,
    pub incomplete: AtomicU64,
    pub llm_tokens: AtomicU64,
}

impl ReportCounters {
    pub fn snapshot(&self, wall_ms: u64) -> GenerationReport {
        GenerationReport {
            attempts: self.attempts.load(Ordering::SeqCst),
            kept: self.kept.load(Ordering::SeqCst),
            discarded_hallucination: self.discarded_hallucination.load(Ordering::SeqCst),
            discarded_parse: self.discarded_parse.load(Ordering::SeqCst),
            incomplete: self.incomplete.load(Ordering::SeqCst),
            llm_tokens: self.llm_tokens.load(Ordering::SeqCst),
            wall_ms,
        }
    }
}
