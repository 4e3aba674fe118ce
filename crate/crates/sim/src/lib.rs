//! Labeled composite-traffic generation: role assignment, behavior
//! description, retrieval-augmented prompt assembly, LLM-planned sequences,
//! execution against a provisioned target, and hallucination elimination —
//! plus a deterministic offline generator that reproduces the cookie-theft
//! scenario (probing, a foreign-cookie access, benign cover traffic) with
//! exact labels and no network access.
//!
//! The two entry points are [`generate`] (LLM-backed cycle) and
//! [`synth_generate`] (offline). Both emit [`TrafficSequence`]s in the
//! traffic-core data model, ready for the line-delimited corpus format.
//!
//! Credentials are researcher-controlled: exactly two identity slots (own
//! and foreign) provisioned by the operator. Nothing in this crate targets
//! systems it was not pointed at.

pub mod behavior;
pub mod executor;
pub mod filter;
pub mod generate;
pub mod llm;
pub mod mock;
pub mod plan;
pub mod prompt;
pub mod report;
pub mod role;
pub mod synth;

pub use behavior::{describe_behavior, describe_behavior_llm};
pub use executor::{ExecutedSequence, Executor};
pub use filter::{filter_hallucinations, DiscardReason, FilterOutcome};
pub use generate::{generate, GenerateConfig};
pub use llm::{LlmClient, LlmConfig, LlmReply};
pub use plan::{generate_plan, parse_plan, IdentitySlot, PlanFailure, PlanOutcome, PlanStep, PlannedSequence};
pub use prompt::build_prompt;
pub use report::GenerationReport;
pub use role::{assign_role, Role};
pub use synth::synth_generate;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("knowledge base is empty; mine it before simulating")]
    EmptyKnowledge,
    #[error("LLM transport failed after {attempts} attempts: {detail}")]
    Transport { attempts: usize, detail: String },
    #[error("LLM reply failed the plan schema after {attempts} attempts: {detail}")]
    PlanParse { attempts: usize, detail: String },
    #[error("LLM reply missing choices[0].message.content")]
    MalformedReply,
    #[error("plan invalid: {0}")]
    InvalidPlan(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
