//! Unsupervised API endpoint discovery from raw traffic.
//!
//! Paths are tokenized on `/`, obviously-variable tokens (numeric IDs, long
//! hex strings, UUIDs) are pre-masked to `<*>`, and the masked token streams
//! are clustered in a fixed-depth prefix tree: streams sharing method, token
//! count and the first few tokens land in the same group, and within a group
//! a stream merges into the closest existing cluster when their token-wise
//! similarity reaches the threshold, masking divergent positions. Mining is
//! a single deterministic pass; the resulting template set is immutable.

use crate::traffic::{Method, TrafficRecord};
use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;
use thiserror::Error;

/// The wildcard marker used for masked path positions.
pub const WILDCARD: &str = "<*>";

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("cannot mine templates from an empty corpus")]
    EmptyCorpus,
    #[error("internal consistency violation: {0}")]
    InternalConsistency(String),
}

/// One position of a mined path pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathToken {
    Literal(String),
    Wildcard,
}

impl PathToken {
    pub fn render(&self) -> &str {
        match self {
            PathToken::Literal(s) => s,
            PathToken::Wildcard => WILDCARD,
        }
    }
}

impl Serialize for PathToken {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.render())
    }
}

impl<'de> Deserialize<'de> for PathToken {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == WILDCARD { PathToken::Wildcard } else { PathToken::Literal(s) })
    }
}

/// A mined API endpoint: method plus a masked path pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiTemplate {
    pub template_id: u64,
    pub method: Method,
    /// Nonempty; wildcard positions match any token.
    pub token_pattern: Vec<PathToken>,
    /// Number of corpus records that fed this template.
    pub support: u64,
}

impl ApiTemplate {
    /// Human-readable rendering, e.g. `GET /api/users/<*>`.
    pub fn render(&self) -> String {
        format!("{} {}", self.method, self.render_path())
    }

    /// The pattern as a path string with `<*>` at masked positions.
    pub fn render_path(&self) -> String {
        if self.token_pattern.len() == 1 && self.token_pattern[0].render() == "/" {
            return "/".to_string();
        }
        let mut s = String::new();
        for token in &self.token_pattern {
            s.push('/');
            s.push_str(token.render());
        }
        s
    }

    /// Whether any position still carries a literal token (fully masked
    /// patterns arise only from pre-masking, never from cluster merging).
    pub fn has_literal(&self) -> bool {
        self.token_pattern.iter().any(|t| matches!(t, PathToken::Literal(_)))
    }
}

static ALL_DIGITS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d+$").unwrap());
static LONG_HEX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[0-9a-fA-F]{16,}$").unwrap());
static UUID: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$").unwrap()
});

/// Replaces ID-shaped tokens with the wildcard marker. Idempotent: an
/// already-masked token is passed through unchanged.
pub fn pre_mask(token: &str) -> String {
    if token == WILDCARD || ALL_DIGITS.is_match(token) || LONG_HEX.is_match(token) || UUID.is_match(token) {
        WILDCARD.to_string()
    } else {
        token.to_string()
    }
}

/// Splits a path into its segment tokens. The root path `/` is represented
/// as the single literal token `/` so patterns are never empty.
pub fn tokenize_path(path: &str) -> Vec<String> {
    let tokens: Vec<String> = path.split('/').filter(|s| !s.is_empty()).map(String::from).collect();
    if tokens.is_empty() {
        vec!["/".to_string()]
    } else {
        tokens
    }
}

fn masked_tokens(path: &str) -> Vec<String> {
    tokenize_path(path).iter().map(|t| pre_mask(t)).collect()
}

struct Cluster {
    pattern: Vec<PathToken>,
    support: u64,
}

/// Token-wise similarity between a cluster pattern and a masked token
/// stream of the same length. A wildcard position counts as a match since it
/// accepts any token.
fn similarity(pattern: &[PathToken], tokens: &[String]) -> f64 {
    let hits = pattern
        .iter()
        .zip(tokens)
        .filter(|(p, t)| match p {
            PathToken::Wildcard => true,
            PathToken::Literal(l) => l == *t,
        })
        .count();
    hits as f64 / pattern.len() as f64
}

/// Mines endpoint templates from a record corpus.
///
/// `similarity_threshold` is the merge gate in (0, 1]. `depth` follows the
/// fixed-depth-tree convention of counting the root and length levels, so
/// streams are grouped by their first `depth - 2` tokens before similarity
/// clustering; `depth` must be at least 2.
pub fn mine_templates(
    records: &[TrafficRecord],
    similarity_threshold: f64,
    depth: usize,
) -> Result<Vec<ApiTemplate>, MinerError> {
    if records.is_empty() {
        return Err(MinerError::EmptyCorpus);
    }
    assert!(
        similarity_threshold > 0.0 && similarity_threshold <= 1.0,
        "similarity threshold must be in (0, 1]"
    );
    assert!(depth >= 2, "tree depth must be at least 2");
    let prefix_len = depth - 2;

    // Group key -> clusters, in first-seen order for deterministic ids.
    let mut groups: IndexMap<(Method, usize, Vec<String>), Vec<Cluster>> = IndexMap::new();
    for record in records {
        let tokens = masked_tokens(&record.path);
        let key = (
            record.method,
            tokens.len(),
            tokens.iter().take(prefix_len.min(tokens.len())).cloned().collect::<Vec<_>>(),
        );
        let clusters = groups.entry(key).or_default();

        // Best similar cluster wins; ties go to the earliest cluster.
        let mut best: Option<(usize, f64)> = None;
        for (idx, cluster) in clusters.iter().enumerate() {
            let sim = similarity(&cluster.pattern, &tokens);
            if sim >= similarity_threshold && best.map_or(true, |(_, b)| sim > b) {
                best = Some((idx, sim));
            }
        }
        match best {
            Some((idx, _)) if merge_keeps_a_literal(&clusters[idx].pattern, &tokens) => {
                let cluster = &mut clusters[idx];
                for (pos, token) in tokens.iter().enumerate() {
                    if let PathToken::Literal(l) = &cluster.pattern[pos] {
                        if l != token {
                            cluster.pattern[pos] = PathToken::Wildcard;
                        }
                    }
                }
                cluster.support += 1;
            }
            _ => clusters.push(Cluster {
                pattern: tokens
                    .into_iter()
                    .map(|t| if t == WILDCARD { PathToken::Wildcard } else { PathToken::Literal(t) })
                    .collect(),
                support: 1,
            }),
        }
    }

    let mut templates = Vec::new();
    let mut next_id = 0u64;
    for ((method, _, _), clusters) in groups {
        for cluster in clusters {
            templates.push(ApiTemplate {
                template_id: next_id,
                method,
                token_pattern: cluster.pattern,
                support: cluster.support,
            });
            next_id += 1;
        }
    }
    Ok(templates)
}

/// A merge must not mask the pattern's last literal: a multi-token pattern
/// with no anchors would shadow every other pattern of the same shape.
/// Single-token patterns and streams the pre-masker already reduced to all
/// wildcards are exempt (they are identical, not merged-away).
fn merge_keeps_a_literal(pattern: &[PathToken], tokens: &[String]) -> bool {
    if pattern.len() == 1 {
        return true;
    }
    pattern.iter().zip(tokens).any(|(p, t)| match p {
        PathToken::Literal(l) => l == t,
        PathToken::Wildcard => false,
    }) || pattern.iter().all(|p| matches!(p, PathToken::Wildcard))
}

/// Finds the template a record belongs to: method and token count must
/// match, literal positions must equal the record's masked tokens, and
/// wildcard positions accept anything. Templates are scanned in id order;
/// mining guarantees at most one can match a record drawn from its corpus.
pub fn match_template(record: &TrafficRecord, templates: &[ApiTemplate]) -> Option<u64> {
    let tokens = masked_tokens(&record.path);
    templates
        .iter()
        .find(|t| {
            t.method == record.method
                && t.token_pattern.len() == tokens.len()
                && t.token_pattern.iter().zip(&tokens).all(|(p, tok)| match p {
                    PathToken::Wildcard => true,
                    PathToken::Literal(l) => l == tok,
                })
        })
        .map(|t| t.template_id)
}

/// Evidence-based access-control classification of an endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuthIndicator {
    Open,
    Authenticated,
    Privileged,
    Unknown,
}

/// Observed values for one query key, capped at [`PARAM_VALUE_CAP`] distinct
/// values after which the key is marked open-ended.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamValues {
    pub values: BTreeSet<String>,
    pub open_ended: bool,
}

/// Distinct values tracked per query key before declaring it open-ended.
pub const PARAM_VALUE_CAP: usize = 64;

/// A mined endpoint enriched with semantics, parameter values, and an
/// authorization indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeItem {
    pub template: ApiTemplate,
    /// Functional description; starts as the template rendering and may be
    /// enriched later.
    pub semantics: String,
    pub allowed_params: BTreeMap<String, ParamValues>,
    pub auth_indicator: AuthIndicator,
}

/// Aggregates per-template evidence into knowledge items, one per template.
pub fn build_knowledge_base(
    records: &[TrafficRecord],
    templates: &[ApiTemplate],
) -> Result<Vec<KnowledgeItem>, MinerError> {
    struct Evidence {
        params: BTreeMap<String, ParamValues>,
        saw_match: bool,
        ok_identities: BTreeSet<String>,
        saw_open_ok: bool,
        forbidden_identities: BTreeSet<String>,
    }
    let mut evidence: BTreeMap<u64, Evidence> = templates
        .iter()
        .map(|t| {
            (
                t.template_id,
                Evidence {
                    params: BTreeMap::new(),
                    saw_match: false,
                    ok_identities: BTreeSet::new(),
                    saw_open_ok: false,
                    forbidden_identities: BTreeSet::new(),
                },
            )
        })
        .collect();

    for record in records {
        let Some(id) = match_template(record, templates) else { continue };
        let ev = evidence.get_mut(&id).expect("matched id comes from the template set");
        ev.saw_match = true;
        for (k, v) in &record.query_params {
            let slot = ev.params.entry(k.clone()).or_default();
            if slot.values.len() < PARAM_VALUE_CAP {
                slot.values.insert(v.clone());
            } else if !slot.values.contains(v) {
                slot.open_ended = true;
            }
        }
        match record.status {
            200 => {
                if record.identity.is_empty() {
                    ev.saw_open_ok = true;
                } else {
                    ev.ok_identities.insert(record.identity.clone());
                }
            }
            403 => {
                ev.forbidden_identities.insert(record.identity.clone());
            }
            _ => {}
        }
    }

    templates
        .iter()
        .map(|template| {
            let ev = &evidence[&template.template_id];
            if !ev.saw_match {
                return Err(MinerError::InternalConsistency(format!(
                    "template {} ({}) matched no record in its own corpus",
                    template.template_id,
                    template.render()
                )));
            }
            // 403 from one identity alongside a 200 from a different one is
            // the footprint of a privilege boundary. An anonymous 200 counts
            // as "another identity" for any non-anonymous denial.
            let privileged = ev.forbidden_identities.iter().any(|denied| {
                ev.ok_identities.iter().any(|ok| ok != denied) || (ev.saw_open_ok && !denied.is_empty())
            });
            let auth_indicator = if privileged {
                AuthIndicator::Privileged
            } else if ev.saw_open_ok {
                AuthIndicator::Open
            } else if !ev.ok_identities.is_empty() {
                AuthIndicator::Authenticated
            } else {
                AuthIndicator::Unknown
            };
            Ok(KnowledgeItem {
                template: template.clone(),
                semantics: template.render(),
                allowed_params: ev.params.clone(),
                auth_indicator,
            })
        })
        .collect()
}

/// Serialized knowledge-base document.
#[derive(Debug, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub kb_version: u32,
    pub items: Vec<KbItemWire>,
}

/// Wire shape of one knowledge item.
#[derive(Debug, Serialize, Deserialize)]
pub struct KbItemWire {
    pub template_id: u64,
    pub method: Method,
    pub pattern: Vec<PathToken>,
    pub support: u64,
    pub semantics: String,
    pub allowed_params: BTreeMap<String, ParamValues>,
    pub auth: AuthIndicator,
}

/// Current knowledge-base schema version.
pub const KB_VERSION: u32 = 1;

pub fn kb_to_json(items: &[KnowledgeItem]) -> String {
    let doc = KnowledgeBase {
        kb_version: KB_VERSION,
        items: items
            .iter()
            .map(|item| KbItemWire {
                template_id: item.template.template_id,
                method: item.template.method,
                pattern: item.template.token_pattern.clone(),
                support: item.template.support,
                semantics: item.semantics.clone(),
                allowed_params: item.allowed_params.clone(),
                auth: item.auth_indicator,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("knowledge base serialization cannot fail")
}

pub fn kb_from_json(json: &str) -> Result<Vec<KnowledgeItem>, MinerError> {
    let doc: KnowledgeBase = serde_json::from_str(json)
        .map_err(|e| MinerError::InternalConsistency(format!("knowledge base malformed: {e}")))?;
    if doc.kb_version != KB_VERSION {
        return Err(MinerError::InternalConsistency(format!(
            "unsupported kb_version {} (expected {KB_VERSION})",
            doc.kb_version
        )));
    }
    Ok(doc
        .items
        .into_iter()
        .map(|w| KnowledgeItem {
            template: ApiTemplate {
                template_id: w.template_id,
                method: w.method,
                token_pattern: w.pattern,
                support: w.support,
            },
            semantics: w.semantics,
            allowed_params: w.allowed_params,
            auth_indicator: w.auth,
        })
        .collect())
}

/// Extracts the templates from a knowledge base.
pub fn kb_templates(items: &[KnowledgeItem]) -> Vec<ApiTemplate> {
    items.iter().map(|i| i.template.clone()).collect()
}
