//! Deterministic offline scenario generator.
//!
//! Reproduces the cookie-theft composite attack without an LLM or a live
//! target: a malicious session probes protected resources under its own
//! identity (401/403 denials), switches to a stolen foreign cookie — which
//! succeeds (200) for the exploit subset — then blends back into benign
//! cover traffic. Benign sessions browse their own data and see only 200s.
//! Every record is individually plausible; only composite context separates
//! the roles.

use crate::role::{assign_role, Role};
use crate::SimError;
use bacalarm_core::miner::{KnowledgeItem, PathToken};
use bacalarm_core::traffic::{SequenceRole, TrafficRecord, TrafficSequence};
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

const BASE_TIMESTAMP: i64 = 1_700_000_000_000;

/// Instantiates a template into a concrete request target, filling wildcard
/// segments with small numeric identifiers.
fn fill_path<R: Rng>(item: &KnowledgeItem, rng: &mut R) -> String {
    if item.template.render_path() == "/" {
        return "/".to_string();
    }
    let mut path = String::new();
    for token in &item.template.token_pattern {
        path.push('/');
        match token {
            PathToken::Literal(s) => path.push_str(s),
            PathToken::Wildcard => path.push_str(&rng.gen_range(1..=30u32).to_string()),
        }
    }
    path
}

/// Draws zero or one query pair from the endpoint's observed parameters.
fn draw_params<R: Rng>(item: &KnowledgeItem, rng: &mut R) -> IndexMap<String, String> {
    let mut params = IndexMap::new();
    if item.allowed_params.is_empty() || !rng.gen_bool(0.4) {
        return params;
    }
    let keys: Vec<&String> = item.allowed_params.keys().collect();
    let key = keys[rng.gen_range(0..keys.len())];
    let values = &item.allowed_params[key];
    let value = if values.values.is_empty() {
        rng.gen_range(1..=9u32).to_string()
    } else {
        let nth = rng.gen_range(0..values.values.len());
        values.values.iter().nth(nth).expect("index in range").clone()
    };
    params.insert(key.clone(), value);
    params
}

struct RecordSpec<'a> {
    item: &'a KnowledgeItem,
    identity: String,
    status: u16,
    repeat_path: Option<String>,
}

fn emit<R: Rng>(
    specs: &[RecordSpec<'_>],
    session_id: &str,
    base_ts: i64,
    rng: &mut R,
) -> Vec<TrafficRecord> {
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let path = spec.repeat_path.clone().unwrap_or_else(|| fill_path(spec.item, rng));
            TrafficRecord {
                timestamp: base_ts + i as i64 * 7,
                session_id: session_id.to_string(),
                identity: spec.identity.clone(),
                method: spec.item.template.method,
                path,
                query_params: draw_params(spec.item, rng),
                status: spec.status,
                template_id: None,
            }
        })
        .collect()
}

fn benign_sequence<'a, R: Rng>(
    knowledge: &'a [KnowledgeItem],
    identity: &str,
    rng: &mut R,
) -> Vec<RecordSpec<'a>> {
    let len = rng.gen_range(3..=10);
    let mut specs: Vec<RecordSpec<'a>> = Vec::with_capacity(len);
    let mut last_path: Option<String> = None;
    for _ in 0..len {
        let item = &knowledge[rng.gen_range(0..knowledge.len())];
        // Benign users re-open the same page now and then.
        let repeat_path = match &last_path {
            Some(p) if rng.gen_bool(0.25) => Some(p.clone()),
            _ => None,
        };
        let path = repeat_path.clone().unwrap_or_else(|| fill_path(item, rng));
        last_path = Some(path.clone());
        specs.push(RecordSpec {
            item,
            identity: identity.to_string(),
            status: 200,
            repeat_path: Some(path),
        });
    }
    specs
}

/// Builds the Fig.-2-shaped malicious phases: own-identity probing denials,
/// a stolen-cookie access (200 only for the exploit subset), then benign
/// cover under the own identity again. Returns the specs and whether the
/// exploit succeeded.
fn malicious_sequence<'a, R: Rng>(
    knowledge: &'a [KnowledgeItem],
    own: &str,
    foreign: &str,
    rng: &mut R,
) -> (Vec<RecordSpec<'a>>, bool) {
    // Prefer identifier-parameterized endpoints: enumeration needs an id to
    // walk. Fall back to the whole base when everything is static.
    let probe_pool: Vec<&KnowledgeItem> = {
        let with_wildcard: Vec<&KnowledgeItem> = knowledge
            .iter()
            .filter(|i| i.template.token_pattern.iter().any(|t| matches!(t, PathToken::Wildcard)))
            .collect();
        if with_wildcard.is_empty() { knowledge.iter().collect() } else { with_wildcard }
    };
    let target = probe_pool[rng.gen_range(0..probe_pool.len())];
    let exploit = rng.gen_bool(0.6);

    let mut specs: Vec<RecordSpec<'a>> = Vec::new();
    for _ in 0..rng.gen_range(2..=4) {
        let status = if rng.gen_bool(0.2) { 401 } else { 403 };
        specs.push(RecordSpec { item: target, identity: own.to_string(), status, repeat_path: None });
    }
    for _ in 0..rng.gen_range(1..=2) {
        let status = if exploit { 200 } else { 403 };
        specs.push(RecordSpec { item: target, identity: foreign.to_string(), status, repeat_path: None });
    }
    for _ in 0..rng.gen_range(2..=4) {
        let item = &knowledge[rng.gen_range(0..knowledge.len())];
        specs.push(RecordSpec { item, identity: own.to_string(), status: 200, repeat_path: None });
    }
    (specs, exploit)
}

/// Generates `n` labeled sequences from the knowledge base, byte-identical
/// per seed. Roles come from [`assign_role`] (≈50/50); every malicious
/// sequence carries at least one identity switch; statuses stay within
/// {200, 401, 403}.
pub fn synth_generate(
    knowledge: &[KnowledgeItem],
    n: usize,
    seed: u64,
) -> Result<Vec<TrafficSequence>, SimError> {
    if knowledge.is_empty() {
        return Err(SimError::EmptyKnowledge);
    }
    let mut sequences = Vec::with_capacity(n);
    for i in 0..n {
        // One RNG stream per sequence: corpora stay prefix-stable when n
        // changes and never depend on generation order.
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);

        let role = assign_role(&mut rng);
        let own = format!("id-{:04}", rng.gen_range(0..500u32));
        let foreign = loop {
            let candidate = format!("id-{:04}", rng.gen_range(0..500u32));
            if candidate != own {
                break candidate;
            }
        };
        let sequence_id = format!("synth-{i:06}");
        let base_ts = BASE_TIMESTAMP + i as i64 * 10_000;

        let (specs, exploit) = match role {
            Role::Benign => (benign_sequence(knowledge, &own, &mut rng), false),
            Role::Malicious => malicious_sequence(knowledge, &own, &foreign, &mut rng),
        };
        let records = emit(&specs, &sequence_id, base_ts, &mut rng);
        let sequence = TrafficSequence::new(
            sequence_id,
            records,
            SequenceRole::from(role),
            Some(role.is_malicious()),
            Some(exploit),
        )
        .expect("generated sequences are non-empty with consistent labels");
        sequences.push(sequence);
    }
    Ok(sequences)
}
