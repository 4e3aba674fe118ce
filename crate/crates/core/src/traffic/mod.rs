//! Canonical data model for HTTP traffic records and behavioral sequences.
//!
//! A [`TrafficRecord`] is one observed request/response pair. A
//! [`TrafficSequence`] is an ordered window of records from one behavioral
//! session and is the unit every downstream stage (features, scoring,
//! detection) operates on. Records and sequences are immutable after
//! construction and safe to share across threads.

mod io;

pub use io::{read_corpus, read_records, serialize_record, write_corpus, LineLabels};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while parsing or validating traffic data.
#[derive(Debug, Error)]
pub enum TrafficError {
    /// Malformed input text. `offset` is the byte offset of the first
    /// character the parser could not make sense of.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    /// A required field is absent from the input.
    #[error("missing required field `{0}`")]
    Schema(String),
    /// HTTP status outside [100, 599].
    #[error("status {0} outside the valid range [100, 599]")]
    Range(u16),
    /// A field value violates a record invariant.
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

/// HTTP request methods recognized by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    GET,
    POST,
    PUT,
    PATCH,
    DELETE,
    HEAD,
    OPTIONS,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::GET => "GET",
            Method::POST => "POST",
            Method::PUT => "PUT",
            Method::PATCH => "PATCH",
            Method::DELETE => "DELETE",
            Method::HEAD => "HEAD",
            Method::OPTIONS => "OPTIONS",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = TrafficError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "GET" => Ok(Method::GET),
            "POST" => Ok(Method::POST),
            "PUT" => Ok(Method::PUT),
            "PATCH" => Ok(Method::PATCH),
            "DELETE" => Ok(Method::DELETE),
            "HEAD" => Ok(Method::HEAD),
            "OPTIONS" => Ok(Method::OPTIONS),
            other => Err(TrafficError::Invalid {
                field: "m",
                message: format!("unknown HTTP method {other:?}"),
            }),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One HTTP request/response observation.
///
/// `identity` is an opaque, pre-hashed token identifier — the pipeline never
/// sees raw cookies. An empty identity means the request carried no
/// authentication at all.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficRecord {
    /// Epoch milliseconds.
    pub timestamp: i64,
    /// Opaque session identifier.
    pub session_id: String,
    /// Opaque pre-hashed identity token; empty when unauthenticated.
    pub identity: String,
    pub method: Method,
    /// Normalized URL path: starts with `/`, no query, no fragment.
    pub path: String,
    /// Query parameters in request order; keys are unique.
    pub query_params: IndexMap<String, String>,
    /// HTTP status in [100, 599].
    pub status: u16,
    /// Set once the record has been matched against a mined template.
    pub template_id: Option<u64>,
}

impl TrafficRecord {
    /// Checks every record invariant, returning the first violation.
    pub fn validate(&self) -> Result<(), TrafficError> {
        if !self.path.starts_with('/') {
            return Err(TrafficError::Invalid {
                field: "path",
                message: format!("path {:?} does not begin with '/'", self.path),
            });
        }
        if self.path.contains('?') || self.path.contains('#') {
            return Err(TrafficError::Invalid {
                field: "path",
                message: format!("path {:?} contains '?' or '#'", self.path),
            });
        }
        if !(100..=599).contains(&self.status) {
            return Err(TrafficError::Range(self.status));
        }
        Ok(())
    }
}

/// Label assigned to a sequence by the generator or by an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceRole {
    Benign,
    Malicious,
    Unlabeled,
}

impl std::fmt::Display for SequenceRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SequenceRole::Benign => f.write_str("benign"),
            SequenceRole::Malicious => f.write_str("malicious"),
            SequenceRole::Unlabeled => f.write_str("unlabeled"),
        }
    }
}

/// An ordered, optionally labeled window of records from one behavioral
/// session — the unit of detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSequence {
    pub sequence_id: String,
    /// Nonempty, sorted by timestamp (ties keep input order).
    pub records: Vec<TrafficRecord>,
    pub role: SequenceRole,
    /// True when the sequence realizes a BAC violation.
    pub violation: Option<bool>,
    /// True when the violation successfully escaped interception.
    /// `exploit = true` implies `violation = true`.
    pub exploit: Option<bool>,
}

impl TrafficSequence {
    /// Builds a sequence, stable-sorting records by timestamp and checking
    /// the label implication `exploit ⇒ violation`.
    pub fn new(
        sequence_id: impl Into<String>,
        mut records: Vec<TrafficRecord>,
        role: SequenceRole,
        violation: Option<bool>,
        exploit: Option<bool>,
    ) -> Result<Self, TrafficError> {
        if records.is_empty() {
            return Err(TrafficError::Invalid {
                field: "records",
                message: "a sequence must contain at least one record".into(),
            });
        }
        if exploit == Some(true) && violation != Some(true) {
            return Err(TrafficError::Invalid {
                field: "exploit",
                message: "exploit = true requires violation = true".into(),
            });
        }
        records.sort_by_key(|r| r.timestamp); // stable: ties keep input order
        Ok(Self {
            sequence_id: sequence_id.into(),
            records,
            role,
            violation,
            exploit,
        })
    }

    /// Sequence length T.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Splits a request-target string into a normalized path and its query
/// parameters.
///
/// The fragment (anything from the first `#`) is dropped, the target is split
/// at the first `?`, a trailing `/` is stripped unless the path is exactly
/// `/`, and query pairs are kept in request order. Nothing is
/// percent-decoded; paths compare byte-wise. A repeated query key keeps its
/// first position and the last value.
pub fn normalize_path(raw: &str) -> Result<(String, IndexMap<String, String>), TrafficError> {
    if raw.is_empty() {
        return Err(TrafficError::Parse {
            offset: 0,
            message: "empty request target".into(),
        });
    }
    let without_fragment = match raw.find('#') {
        Some(i) => &raw[..i],
        None => raw,
    };
    let (path_part, query_part) = match without_fragment.find('?') {
        Some(i) => (&without_fragment[..i], &without_fragment[i + 1..]),
        None => (without_fragment, ""),
    };
    let path = if path_part.len() > 1 && path_part.ends_with('/') {
        path_part[..path_part.len() - 1].to_string()
    } else {
        path_part.to_string()
    };
    let mut params = IndexMap::new();
    for pair in query_part.split('&') {
        if pair.is_empty() {
            continue;
        }
        match pair.find('=') {
            Some(i) => params.insert(pair[..i].to_string(), pair[i + 1..].to_string()),
            None => params.insert(pair.to_string(), String::new()),
        };
    }
    Ok((path, params))
}

/// Groups a record stream into per-session sequences separated by inactivity.
///
/// Records sharing a `session_id` are ordered by timestamp (stable) and a new
/// sequence starts whenever the gap between adjacent records exceeds
/// `gap_ms`. Sessions appear in first-seen input order; windows within a
/// session are chronological. Output sequences are unlabeled.
pub fn window_sessions(records: Vec<TrafficRecord>, gap_ms: i64) -> Vec<TrafficSequence> {
    assert!(gap_ms > 0, "gap must be positive");
    let mut by_session: IndexMap<String, Vec<TrafficRecord>> = IndexMap::new();
    for r in records {
        by_session.entry(r.session_id.clone()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (sid, mut recs) in by_session {
        recs.sort_by_key(|r| r.timestamp);
        let mut window: Vec<TrafficRecord> = Vec::new();
        let mut window_idx = 0usize;
        for r in recs {
            if let Some(last) = window.last() {
                if r.timestamp - last.timestamp > gap_ms {
                    out.push(finish_window(&sid, window_idx, std::mem::take(&mut window)));
                    window_idx += 1;
                }
            }
            window.push(r);
        }
        if !window.is_empty() {
            out.push(finish_window(&sid, window_idx, window));
        }
    }
    out
}

fn finish_window(sid: &str, idx: usize, records: Vec<TrafficRecord>) -> TrafficSequence {
    TrafficSequence::new(format!("{sid}#{idx}"), records, SequenceRole::Unlabeled, None, None)
        .expect("window is nonempty by construction")
}
