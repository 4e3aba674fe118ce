//! Retrieval-augmented prompt assembly, step 3 of the generation cycle.

use crate::role::Role;
use bacalarm_core::miner::{AuthIndicator, KnowledgeItem};

fn auth_label(auth: AuthIndicator) -> &'static str {
    match auth {
        AuthIndicator::Open => "open",
        AuthIndicator::Authenticated => "authenticated",
        AuthIndicator::Privileged => "privileged",
        AuthIndicator::Unknown => "unknown",
    }
}

/// One prompt line for a retrieved endpoint: method, path pattern, allowed
/// query parameters (up to three sample values each, `*` when open-ended),
/// and the mined authorization indicator.
fn endpoint_line(item: &KnowledgeItem) -> String {
    let params = if item.allowed_params.is_empty() {
        "none".to_string()
    } else {
        item.allowed_params
            .iter()
            .map(|(key, values)| {
                if values.open_ended {
                    format!("{key}(*)")
                } else {
                    let sample: Vec<&str> =
                        values.values.iter().take(3).map(String::as_str).collect();
                    format!("{key}({})", sample.join(","))
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!(
        "- {} {} | params: {} | auth: {}",
        item.template.method,
        item.template.render_path(),
        params,
        auth_label(item.auth_indicator)
    )
}

/// Builds the deterministic planning prompt: role directive, behavior text,
/// one line per retrieved endpoint in rank order, and the strict output
/// format the parser enforces.
pub fn build_prompt(role: Role, behavior: &str, retrieved: &[KnowledgeItem]) -> String {
    let directive = match role {
        Role::Benign => {
            "You simulate a LEGITIMATE user of a web application. Every request uses the user's \
own session (identity \"own\") and touches only data this user may access."
        }
        Role::Malicious => {
            "You simulate an ATTACKER probing the application for broken access control. The \
attacker holds their own session (identity \"own\") and one stolen session cookie from another \
user (identity \"foreign\"); at least one step must use \"foreign\" to reach data that is not \
the attacker's."
        }
    };
    let mut endpoints = String::new();
    for item in retrieved {
        endpoints.push_str(&endpoint_line(item));
        endpoints.push('\n');
    }
    format!(
        "{directive}\n\nTarget behavior: {behavior}\n\nKnown API endpoints (path segments `<*>` \
are numeric identifiers you must instantiate):\n{endpoints}\nPlan the HTTP requests that realize \
the behavior, in execution order. Reply with ONLY a JSON array, no prose and no code fences. \
Each element must be {{\"method\": \"GET|POST|PUT|PATCH|DELETE\", \"path\": \
\"/path/with/ids?and=params\", \"intent\": \"what this step does\", \"identity\": \
\"own|foreign\"}}."
    )
}
