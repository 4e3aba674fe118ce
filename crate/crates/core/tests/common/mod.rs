//! Shared generators for the integration suites: random corpora with known
//! ground-truth templates, and random labeled sequences.
#![allow(dead_code)]

use bacalarm_core::traffic::{Method, SequenceRole, TrafficRecord, TrafficSequence};
use indexmap::IndexMap;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

pub const METHODS: [Method; 5] =
    [Method::GET, Method::POST, Method::PUT, Method::DELETE, Method::PATCH];

pub const STATUSES: [u16; 6] = [200, 401, 403, 404, 500, 302];

/// A ground-truth endpoint shape: literal segments interleaved with ID slots.
#[derive(Debug, Clone)]
pub struct GroundTruthEndpoint {
    pub method: Method,
    /// `None` marks an ID slot that will be filled with a fresh number.
    pub segments: Vec<Option<String>>,
}

impl GroundTruthEndpoint {
    /// The template rendering this endpoint should mine to.
    pub fn expected_pattern(&self) -> (Method, Vec<String>) {
        let tokens = self
            .segments
            .iter()
            .map(|s| s.clone().unwrap_or_else(|| "<*>".to_string()))
            .collect();
        (self.method, tokens)
    }

    /// A concrete path drawn from this endpoint.
    pub fn sample_path(&self, rng: &mut impl Rng) -> String {
        let mut path = String::new();
        for seg in &self.segments {
            path.push('/');
            match seg {
                Some(lit) => path.push_str(lit),
                None => path.push_str(&rng.gen_range(1u64..100_000).to_string()),
            }
        }
        path
    }
}

const RESOURCE_WORDS: [&str; 18] = [
    "users", "orders", "items", "posts", "comments", "files", "spaces", "profile", "settings",
    "tokens", "teams", "projects", "tasks", "labels", "metrics", "reports", "keys", "events",
];

/// Draws `n` structurally distinct endpoints. Distinctness is by
/// (method, token count, literal sequence) so no pair can merge into the
/// other during mining.
pub fn random_endpoints(rng: &mut ChaCha12Rng, n: usize) -> Vec<GroundTruthEndpoint> {
    let mut seen = std::collections::HashSet::new();
    let mut endpoints = Vec::new();
    while endpoints.len() < n {
        let method = *METHODS.choose(rng).unwrap();
        let depth = rng.gen_range(2..=4);
        let mut segments: Vec<Option<String>> = vec![Some("api".to_string())];
        for level in 0..depth {
            // IDs only after the first literal, never two slots in a row.
            let id_ok = level > 0 && segments.last().map_or(false, Option::is_some);
            if id_ok && rng.gen_bool(0.4) {
                segments.push(None);
            } else {
                segments.push(Some(RESOURCE_WORDS.choose(rng).unwrap().to_string()));
            }
        }
        let candidate = GroundTruthEndpoint { method, segments };
        let key = candidate.expected_pattern();
        // Reject shapes that differ only in an ID slot position colliding
        // with another endpoint's literal layout of the same prefix: the
        // miner would legitimately merge those.
        let prefix: Vec<String> = key.1.iter().take(2).cloned().collect();
        if seen.insert((key.0, key.1.len(), prefix)) {
            endpoints.push(candidate);
        }
    }
    endpoints
}

/// Samples a log corpus the given endpoints fully explain.
pub fn corpus_from_endpoints(
    rng: &mut ChaCha12Rng,
    endpoints: &[GroundTruthEndpoint],
    lines: usize,
) -> Vec<TrafficRecord> {
    let mut records = Vec::with_capacity(lines);
    for i in 0..lines {
        let ep = endpoints.choose(rng).unwrap();
        let mut query_params = IndexMap::new();
        for key in ["page", "sort", "filter"] {
            if rng.gen_bool(0.25) {
                query_params.insert(key.to_string(), rng.gen_range(0u32..50).to_string());
            }
        }
        records.push(TrafficRecord {
            timestamp: 1_700_000_000_000 + i as i64 * 13,
            session_id: format!("s{}", rng.gen_range(0u32..40)),
            identity: if rng.gen_bool(0.8) { format!("id{}", rng.gen_range(0u32..10)) } else { String::new() },
            method: ep.method,
            path: ep.sample_path(rng),
            query_params,
            status: *STATUSES.choose(rng).unwrap(),
            template_id: None,
        });
    }
    records
}

/// One random record with no ground-truth structure, for feature tests.
pub fn random_record(rng: &mut ChaCha12Rng, ts: i64) -> TrafficRecord {
    let depth = rng.gen_range(1..=4);
    let mut path = String::new();
    for _ in 0..depth {
        path.push('/');
        path.push_str(RESOURCE_WORDS.choose(rng).unwrap());
        if rng.gen_bool(0.3) {
            path.push('/');
            path.push_str(&rng.gen_range(0u32..30).to_string());
        }
    }
    let mut query_params = IndexMap::new();
    for key in ["a", "b", "c", "dup"] {
        if rng.gen_bool(0.3) {
            query_params.insert(key.to_string(), rng.gen_range(0u32..5).to_string());
        }
    }
    TrafficRecord {
        timestamp: ts,
        session_id: "s".to_string(),
        identity: String::new(),
        method: *METHODS.choose(rng).unwrap(),
        path,
        query_params,
        status: *STATUSES.choose(rng).unwrap(),
        template_id: None,
    }
}

/// A random sequence of length 1..=20 with deliberately repeated paths so
/// consecutive-repeat and transition statistics are exercised.
pub fn random_sequence(rng: &mut ChaCha12Rng, id: usize) -> TrafficSequence {
    let t = rng.gen_range(1..=20);
    let mut records: Vec<TrafficRecord> = Vec::with_capacity(t);
    for i in 0..t {
        // With probability 0.3 repeat the previous record's path verbatim.
        if i > 0 && rng.gen_bool(0.3) {
            let mut rec = random_record(rng, 1_000 + i as i64);
            rec.path = records[i - 1].path.clone();
            records.push(rec);
        } else {
            records.push(random_record(rng, 1_000 + i as i64));
        }
    }
    TrafficSequence::new(format!("seq-{id}"), records, SequenceRole::Unlabeled, None, None)
        .expect("nonempty by construction")
}
