//! Line-delimited persistence for records and labeled corpora.
//!
//! One JSON object per line, fields: `ts` (epoch ms), `sid`, `id`, `m`,
//! `path`, `q` (object), `st`, plus optional sequence labels `role`,
//! `violation`, `exploit`, `seq`. Unknown fields are ignored.

use super::{Method, SequenceRole, TrafficError, TrafficRecord, TrafficSequence};
use indexmap::IndexMap;
use serde::Serialize;
use serde_json::Value;
use std::io::{BufRead, Write};

/// Sequence-level labels carried on a record line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LineLabels {
    pub role: Option<SequenceRole>,
    pub violation: Option<bool>,
    pub exploit: Option<bool>,
    pub seq: Option<String>,
}

/// Wire shape of one line; field order is fixed so serialization is
/// deterministic.
#[derive(Serialize)]
struct LineOut<'a> {
    ts: i64,
    sid: &'a str,
    id: &'a str,
    m: &'a str,
    path: &'a str,
    q: &'a IndexMap<String, String>,
    st: u16,
    #[serde(skip_serializing_if = "Option::is_none")]
    role: Option<SequenceRole>,
    #[serde(skip_serializing_if = "Option::is_none")]
    violation: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exploit: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seq: Option<&'a str>,
}

/// Parses one line into a record, ignoring any label fields.
pub fn parse_record(line: &str) -> Result<TrafficRecord, TrafficError> {
    parse_line(line).map(|(r, _)| r)
}

/// Parses one line into a record plus its sequence labels.
pub fn parse_line(line: &str) -> Result<(TrafficRecord, LineLabels), TrafficError> {
    let value: Value = serde_json::from_str(line).map_err(|e| TrafficError::Parse {
        offset: e.column().saturating_sub(1),
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| TrafficError::Parse {
        offset: 0,
        message: "line is not a JSON object".into(),
    })?;

    let ts = obj
        .get("ts")
        .ok_or_else(|| TrafficError::Schema("ts".into()))?
        .as_i64()
        .ok_or_else(|| invalid("ts", "expected an integer"))?;
    let sid = str_field(obj, "sid")?;
    let id = str_field(obj, "id")?;
    let method: Method = str_field(obj, "m")?.parse()?;
    let path = str_field(obj, "path")?;
    let st = obj
        .get("st")
        .ok_or_else(|| TrafficError::Schema("st".into()))?
        .as_u64()
        .ok_or_else(|| invalid("st", "expected an integer"))?;
    if !(100..=599).contains(&st) {
        return Err(TrafficError::Range(st.min(u16::MAX as u64) as u16));
    }
    let mut query_params = IndexMap::new();
    if let Some(q) = obj.get("q") {
        let q = q.as_object().ok_or_else(|| invalid("q", "expected an object"))?;
        for (k, v) in q {
            let v = v.as_str().ok_or_else(|| invalid("q", "values must be strings"))?;
            query_params.insert(k.clone(), v.to_string());
        }
    }

    let record = TrafficRecord {
        timestamp: ts,
        session_id: sid,
        identity: id,
        method,
        path,
        query_params,
        status: st as u16,
        template_id: None,
    };
    record.validate()?;

    let labels = LineLabels {
        role: match obj.get("role").and_then(Value::as_str) {
            None => None,
            Some("benign") => Some(SequenceRole::Benign),
            Some("malicious") => Some(SequenceRole::Malicious),
            Some(other) => {
                return Err(invalid("role", &format!("unknown role {other:?}")));
            }
        },
        violation: obj.get("violation").and_then(Value::as_bool),
        exploit: obj.get("exploit").and_then(Value::as_bool),
        seq: obj.get("seq").and_then(Value::as_str).map(String::from),
    };
    Ok((record, labels))
}

fn str_field(obj: &serde_json::Map<String, Value>, name: &str) -> Result<String, TrafficError> {
    obj.get(name)
        .ok_or_else(|| TrafficError::Schema(name.into()))?
        .as_str()
        .map(String::from)
        .ok_or_else(|| TrafficError::Invalid {
            field: "line",
            message: format!("field `{name}` must be a string"),
        })
}

fn invalid(field: &'static str, message: &str) -> TrafficError {
    TrafficError::Invalid { field, message: message.to_string() }
}

/// Serializes a bare record (no labels) to one line.
pub fn serialize_record(record: &TrafficRecord) -> String {
    serialize_with_labels(record, &LineLabels::default())
}

fn serialize_with_labels(record: &TrafficRecord, labels: &LineLabels) -> String {
    let out = LineOut {
        ts: record.timestamp,
        sid: &record.session_id,
        id: &record.identity,
        m: record.method.as_str(),
        path: &record.path,
        q: &record.query_params,
        st: record.status,
        role: labels.role,
        violation: labels.violation,
        exploit: labels.exploit,
        seq: labels.seq.as_deref(),
    };
    serde_json::to_string(&out).expect("record serialization cannot fail")
}

/// Reads a flat record stream (labels ignored) from line-delimited input.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<TrafficRecord>, TrafficError> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| TrafficError::Parse { offset: 0, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line)?);
    }
    Ok(out)
}

/// Reads a labeled corpus: lines sharing a `seq` id are grouped (in first
/// appearance order) into one sequence carrying that group's labels. Lines
/// without `seq` each form a singleton sequence.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<TrafficSequence>, TrafficError> {
    let mut groups: IndexMap<String, (Vec<TrafficRecord>, LineLabels)> = IndexMap::new();
    let mut singleton_idx = 0usize;
    for line in reader.lines() {
        let line = line.map_err(|e| TrafficError::Parse { offset: 0, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let (record, labels) = parse_line(&line)?;
        let key = match &labels.seq {
            Some(seq) => seq.clone(),
            None => {
                singleton_idx += 1;
                format!("__line{singleton_idx}")
            }
        };
        let entry = groups.entry(key).or_insert_with(|| (Vec::new(), labels.clone()));
        entry.0.push(record);
    }
    groups
        .into_iter()
        .map(|(key, (records, labels))| {
            TrafficSequence::new(
                labels.seq.unwrap_or(key),
                records,
                labels.role.unwrap_or(SequenceRole::Unlabeled),
                labels.violation,
                labels.exploit,
            )
        })
        .collect()
}

/// Writes a labeled corpus in the line-delimited format, one record per line
/// with the owning sequence's labels repeated.
pub fn write_corpus<W: Write>(sequences: &[TrafficSequence], mut writer: W) -> std::io::Result<()> {
    for seq in sequences {
        let labels = LineLabels {
            role: match seq.role {
                SequenceRole::Unlabeled => None,
                role => Some(role),
            },
            violation: seq.violation,
            exploit: seq.exploit,
            seq: Some(seq.sequence_id.clone()),
        };
        for record in &seq.records {
            writeln!(writer, "{}", serialize_with_labels(record, &labels))?;
        }
    }
    Ok(())
}
