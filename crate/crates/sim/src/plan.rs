//! The strict plan schema the LLM must emit, plus parsing with repair
//! retries.

use crate::llm::{ChatMessage, LlmClient};
use crate::role::Role;
use crate::SimError;
use bacalarm_core::traffic::Method;
use serde::{Deserialize, Serialize};

/// Which provisioned credential a step authenticates with. Only these two
/// exist: both accounts are researcher-registered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentitySlot {
    Own,
    Foreign,
}

/// One planned request in the strict wire schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStep {
    pub method: Method,
    /// Request target; may carry a query string.
    pub path: String,
    /// Declared intent of the step, in the planner's words.
    #[serde(alias = "declared_intent")]
    pub intent: String,
    #[serde(alias = "identity_slot")]
    pub identity: IdentitySlot,
}

/// A validated plan: role, the behavior it realizes, and ordered steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedSequence {
    pub role: Role,
    pub behavior: String,
    pub steps: Vec<PlanStep>,
}

/// Result of a successful [`generate_plan`] call.
#[derive(Debug)]
pub struct PlanOutcome {
    pub plan: PlannedSequence,
    /// Repair resubmissions that were needed (0 on first-shot success).
    pub retries: usize,
    /// Tokens billed across all attempts, as reported by the endpoint.
    pub llm_tokens: u64,
}

/// A failed [`generate_plan`] call. Tokens spent on failed attempts are
/// still billed, so the report must see them.
#[derive(Debug)]
pub struct PlanFailure {
    pub error: SimError,
    pub llm_tokens: u64,
}

/// Parses an LLM reply into a validated plan.
///
/// The reply must be a JSON array of step objects. A reply that wraps the
/// array in prose or a code fence is salvaged by parsing the span from the
/// first `[` to the last `]`; everything else is a schema violation.
pub fn parse_plan(role: Role, behavior: &str, reply: &str) -> Result<PlannedSequence, SimError> {
    let trimmed = reply.trim();
    let steps: Vec<PlanStep> = match serde_json::from_str(trimmed) {
        Ok(steps) => steps,
        Err(primary) => {
            let salvaged = match (trimmed.find('['), trimmed.rfind(']')) {
                (Some(start), Some(end)) if start < end => {
                    serde_json::from_str(&trimmed[start..=end]).ok()
                }
                _ => None,
            };
            salvaged.ok_or_else(|| SimError::InvalidPlan(primary.to_string()))?
        }
    };
    validate_steps(role, &steps)?;
    Ok(PlannedSequence { role, behavior: behavior.to_string(), steps })
}

fn validate_steps(role: Role, steps: &[PlanStep]) -> Result<(), SimError> {
    if steps.is_empty() {
        return Err(SimError::InvalidPlan("plan contains no steps".into()));
    }
    for (i, step) in steps.iter().enumerate() {
        if !step.path.starts_with('/') {
            return Err(SimError::InvalidPlan(format!(
                "step {i} path {:?} does not begin with '/'",
                step.path
            )));
        }
    }
    let foreign = steps.iter().filter(|s| s.identity == IdentitySlot::Foreign).count();
    match role {
        Role::Malicious if foreign == 0 => Err(SimError::InvalidPlan(
            "malicious plan never uses the foreign identity".into(),
        )),
        // A benign user has no business holding someone else's cookie.
        Role::Benign if foreign > 0 => Err(SimError::InvalidPlan(
            "benign plan uses the foreign identity".into(),
        )),
        _ => Ok(()),
    }
}

const REPAIR_INSTRUCTION: &str = "Your previous reply was not a valid plan. Reply with ONLY a JSON \
array of step objects {\"method\", \"path\", \"intent\", \"identity\"} — no prose, no code fences.";

/// Asks the LLM for a plan, resubmitting with a repair instruction on schema
/// violations up to `max_repairs` times. Transport failures propagate after
/// the client's own backoff retries; schema exhaustion yields
/// [`SimError::PlanParse`]. Either way the failure carries the tokens spent.
pub fn generate_plan(
    llm: &LlmClient,
    role: Role,
    behavior: &str,
    prompt: &str,
    max_repairs: usize,
) -> Result<PlanOutcome, PlanFailure> {
    let mut messages = vec![ChatMessage::user(prompt)];
    let mut llm_tokens = 0u64;
    let mut last_detail = String::new();
    for attempt in 0..=max_repairs {
        let reply = match llm.complete(&messages) {
            Ok(reply) => reply,
            Err(error) => return Err(PlanFailure { error, llm_tokens }),
        };
        llm_tokens += reply.total_tokens;
        match parse_plan(role, behavior, &reply.content) {
            Ok(plan) => return Ok(PlanOutcome { plan, retries: attempt, llm_tokens }),
            Err(SimError::InvalidPlan(detail)) => {
                last_detail = detail;
                messages.push(ChatMessage::assistant(reply.content));
                messages.push(ChatMessage::user(format!("{REPAIR_INSTRUCTION} ({last_detail})")));
            }
            Err(other) => return Err(PlanFailure { error: other, llm_tokens }),
        }
    }
    Err(PlanFailure {
        error: SimError::PlanParse { attempts: max_repairs + 1, detail: last_detail },
        llm_tokens,
    })
}
