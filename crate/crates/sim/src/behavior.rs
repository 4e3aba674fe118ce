//! Natural-language behavior descriptions, step 1 of the generation cycle.

use crate::llm::{ChatMessage, LlmClient};
use crate::role::Role;
use crate::SimError;
use bacalarm_core::miner::{KnowledgeItem, PathToken};
use rand::Rng;

const BENIGN_PHRASES: &[&str] = &[
    "update user profile details and verify the change",
    "browse the {res} list and open a few entries they own",
    "review their own {res} and edit one of them",
    "search {res} with a filter and read the first result",
    "create a new {res} entry and confirm it appears in their list",
];

const MALICIOUS_PHRASES: &[&str] = &[
    "access another user's {res} using a session cookie that is not theirs",
    "probe {res} identifiers belonging to a different account and try to read them",
    "modify a {res} owned by another user after hijacking their session",
    "enumerate {res} endpoints, then fetch one that a stolen cookie grants access to",
    "delete another account's {res} while blending the attempt into normal browsing",
];

/// Literal resource nouns appearing in the knowledge base, deterministic
/// order. Wildcards and the bare `api` prefix carry no semantics.
fn resource_words(knowledge: &[KnowledgeItem]) -> Vec<String> {
    let mut words: Vec<String> = knowledge
        .iter()
        .flat_map(|item| item.template.token_pattern.iter())
        .filter_map(|token| match token {
            PathToken::Literal(word) if word != "api" && !word.is_empty() => Some(word.clone()),
            _ => None,
        })
        .collect();
    words.sort();
    words.dedup();
    words
}

/// Samples a behavior description from the built-in phrase bank, grounding
/// the `{res}` slot in a resource actually exposed by the knowledge base.
/// Deterministic per (role, rng state, knowledge). The generation cycle
/// delegates to the LLM instead when a client is configured.
pub fn describe_behavior<R: Rng>(role: Role, rng: &mut R, knowledge: &[KnowledgeItem]) -> String {
    let bank = match role {
        Role::Benign => BENIGN_PHRASES,
        Role::Malicious => MALICIOUS_PHRASES,
    };
    let phrase = bank[rng.gen_range(0..bank.len())];
    let words = resource_words(knowledge);
    let resource = if words.is_empty() {
        "resource".to_string()
    } else {
        words[rng.gen_range(0..words.len())].clone()
    };
    phrase.replace("{res}", &resource)
}

/// Asks a configured LLM for the behavior description instead of the phrase
/// bank. The reply is used verbatim (first line, trimmed); the second tuple
/// element is the billed token count, which the caller must account for.
pub fn describe_behavior_llm(
    llm: &LlmClient,
    role: Role,
    knowledge: &[KnowledgeItem],
) -> Result<(String, u64), SimError> {
    let stance = match role {
        Role::Benign => "a legitimate user exercising only their own data",
        Role::Malicious => "an attacker abusing broken access control with a stolen session cookie",
    };
    let words = resource_words(knowledge);
    let resources = if words.is_empty() { "generic resources".to_string() } else { words.join(", ") };
    let prompt = format!(
        "In one sentence, describe a concrete web-application behavior for {stance}. \
The application exposes these resources: {resources}. Reply with the sentence only."
    );
    let reply = llm.complete(&[ChatMessage::user(prompt)])?;
    let line = reply.content.lines().next().unwrap_or("").trim().to_string();
    let text = if line.is_empty() { describe_fallback(role) } else { line };
    Ok((text, reply.total_tokens))
}

fn describe_fallback(role: Role) -> String {
    match role {
        Role::Benign => "browse and update their own records".to_string(),
        Role::Malicious => "access another user's records with a stolen cookie".to_string(),
    }
}
