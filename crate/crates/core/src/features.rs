//! Feature extraction for traffic sequences: thirteen static features over
//! paths, parameters and status codes; Shannon and first-order transition
//! entropies over the method, status and path streams; and the assembled
//! 24-dimensional vector including the sequence-model deviation score.
//!
//! Everything here is a pure function over an immutable sequence, so
//! extraction parallelizes trivially across sequences.

use crate::traffic::TrafficSequence;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("entropy of an empty value list is undefined")]
    EmptyInput,
    #[error("feature io failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("feature table io failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("feature file malformed: {0}")]
    Malformed(String),
}

/// The thirteen per-sequence statistics. Standard deviations are population
/// deviations (divide by T), so a singleton sequence yields zeros.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticFeatureVector {
    pub unique_paths_count: f64,
    pub total_paths_count: f64,
    pub unique_params_count: f64,
    pub total_params_count: f64,
    pub consecutive_repeats: f64,
    pub avg_path_length: f64,
    pub std_path_length: f64,
    pub avg_param_count: f64,
    pub std_param_count: f64,
    pub avg_path_depth: f64,
    pub std_path_depth: f64,
    pub uniqueness_ratio: f64,
    pub status_code_diversity: f64,
}

/// Entropy features in bits: plain and transition entropies for the method,
/// status and path streams, plus binary-indicator entropies per tracked
/// status code and the aggregated status entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyFeatureVector {
    pub h_method: f64,
    pub h_trans_method: f64,
    pub h_status_200: f64,
    pub h_status_403: f64,
    pub h_status_401: f64,
    pub h_status_other: f64,
    pub h_sum_status: f64,
    pub h_trans_status: f64,
    pub h_path: f64,
    pub h_trans_path: f64,
}

/// The full fixed-order feature vector for one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub sequence_id: String,
    pub statics: StaticFeatureVector,
    pub entropy: EntropyFeatureVector,
    /// Positionally weighted deviation score from the sequence model.
    pub deviation: f64,
    /// True = violation. None for unlabeled traffic.
    pub label: Option<bool>,
}

/// Total feature dimensionality (13 static + 10 entropy + deviation).
pub const FEATURE_DIM: usize = 24;

/// Column names in persisted order; the label column comes last.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "unique_paths_count",
    "total_paths_count",
    "unique_params_count",
    "total_params_count",
    "consecutive_repeats",
    "avg_path_length",
    "std_path_length",
    "avg_param_count",
    "std_param_count",
    "avg_path_depth",
    "std_path_depth",
    "uniqueness_ratio",
    "status_code_diversity",
    "h_method",
    "h_trans_method",
    "h_status_200",
    "h_status_403",
    "h_status_401",
    "h_status_other",
    "h_sum_status",
    "h_trans_status",
    "h_path",
    "h_trans_path",
    "deviation",
];

impl FeatureVector {
    /// Flattens into the fixed column order of [`FEATURE_NAMES`].
    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        let s = &self.statics;
        let e = &self.entropy;
        [
            s.unique_paths_count,
            s.total_paths_count,
            s.unique_params_count,
            s.total_params_count,
            s.consecutive_repeats,
            s.avg_path_length,
            s.std_path_length,
            s.avg_param_count,
            s.std_param_count,
            s.avg_path_depth,
            s.std_path_depth,
            s.uniqueness_ratio,
            s.status_code_diversity,
            e.h_method,
            e.h_trans_method,
            e.h_status_200,
            e.h_status_403,
            e.h_status_401,
            e.h_status_other,
            e.h_sum_status,
            e.h_trans_status,
            e.h_path,
            e.h_trans_path,
            self.deviation,
        ]
    }
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Computes the thirteen static features of a sequence.
pub fn static_features(seq: &TrafficSequence) -> StaticFeatureVector {
    let t = seq.len() as f64;
    let paths: Vec<&str> = seq.records.iter().map(|r| r.path.as_str()).collect();
    let unique_paths = paths.iter().collect::<HashSet<_>>().len() as f64;
    let unique_param_keys = seq
        .records
        .iter()
        .flat_map(|r| r.query_params.keys())
        .collect::<HashSet<_>>()
        .len() as f64;
    let param_counts: Vec<f64> = seq.records.iter().map(|r| r.query_params.len() as f64).collect();
    let total_params: f64 = param_counts.iter().sum();
    let consecutive_repeats = paths.windows(2).filter(|w| w[0] == w[1]).count() as f64;
    let path_lengths: Vec<f64> = paths.iter().map(|p| p.chars().count() as f64).collect();
    let path_depths: Vec<f64> = paths.iter().map(|p| p.matches('/').count() as f64).collect();
    let statuses = seq.records.iter().map(|r| r.status).collect::<HashSet<_>>().len() as f64;

    StaticFeatureVector {
        unique_paths_count: unique_paths,
        total_paths_count: t,
        unique_params_count: unique_param_keys,
        total_params_count: total_params,
        consecutive_repeats,
        avg_path_length: path_lengths.iter().sum::<f64>() / t,
        std_path_length: population_std(&path_lengths),
        avg_param_count: total_params / t,
        std_param_count: population_std(&param_counts),
        avg_path_depth: path_depths.iter().sum::<f64>() / t,
        std_path_depth: population_std(&path_depths),
        uniqueness_ratio: unique_paths / t,
        status_code_diversity: statuses,
    }
}

/// Shannon entropy in bits of the empirical category distribution.
pub fn shannon_entropy<T: Hash + Eq>(values: &[T]) -> Result<f64, FeatureError> {
    if values.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let n = values.len() as f64;
    Ok(counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum())
}

/// First-order transition entropy in bits over adjacent pairs; zero when
/// there are fewer than two values.
pub fn transition_entropy<T: Hash + Eq>(values: &[T]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let pairs: Vec<(&T, &T)> = values.windows(2).map(|w| (&w[0], &w[1])).collect();
    let mut counts: HashMap<(&T, &T), usize> = HashMap::new();
    for p in &pairs {
        *counts.entry(*p).or_default() += 1;
    }
    let n = pairs.len() as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Status codes tracked with their own indicator entropy; everything else
/// contributes to `h_status_other`.
pub const TRACKED_STATUSES: [u16; 3] = [200, 403, 401];

/// Computes the entropy feature block for a sequence.
pub fn entropy_features(seq: &TrafficSequence) -> EntropyFeatureVector {
    let methods: Vec<_> = seq.records.iter().map(|r| r.method).collect();
    let statuses: Vec<u16> = seq.records.iter().map(|r| r.status).collect();
    let paths: Vec<&str> = seq.records.iter().map(|r| r.path.as_str()).collect();

    let indicator = |code: u16| -> f64 {
        let stream: Vec<bool> = statuses.iter().map(|s| *s == code).collect();
        shannon_entropy(&stream).expect("sequence is nonempty")
    };
    let other_stream: Vec<bool> = statuses.iter().map(|s| !TRACKED_STATUSES.contains(s)).collect();

    EntropyFeatureVector {
        h_method: shannon_entropy(&methods).expect("sequence is nonempty"),
        h_trans_method: transition_entropy(&methods),
        h_status_200: indicator(200),
        h_status_403: indicator(403),
        h_status_401: indicator(401),
        h_status_other: shannon_entropy(&other_stream).expect("sequence is nonempty"),
        h_sum_status: shannon_entropy(&statuses).expect("sequence is nonempty"),
        h_trans_status: transition_entropy(&statuses),
        h_path: shannon_entropy(&paths).expect("sequence is nonempty"),
        h_trans_path: transition_entropy(&paths),
    }
}

/// Assembles the full fixed-order vector from its parts.
pub fn assemble(
    sequence_id: &str,
    statics: StaticFeatureVector,
    entropy: EntropyFeatureVector,
    deviation: f64,
    label: Option<bool>,
) -> FeatureVector {
    FeatureVector { sequence_id: sequence_id.to_string(), statics, entropy, deviation, label }
}

/// Writes a feature matrix as headered CSV: `sequence_id`, the 24 feature
/// columns in [`FEATURE_NAMES`] order, then `label` (empty when unlabeled).
pub fn write_matrix<W: Write>(vectors: &[FeatureVector], writer: W) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["sequence_id"];
    header.extend(FEATURE_NAMES);
    header.push("label");
    w.write_record(&header)?;
    for v in vectors {
        let mut row = vec![v.sequence_id.clone()];
        row.extend(v.to_array().iter().map(|x| format!("{x}")));
        row.push(match v.label {
            Some(true) => "1".into(),
            Some(false) => "0".into(),
            None => String::new(),
        });
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a feature matrix written by [`write_matrix`], verifying the header.
pub fn read_matrix<R: Read>(reader: R) -> Result<Vec<FeatureVector>, FeatureError> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers().map_err(|e| FeatureError::Malformed(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let mut expected = vec!["sequence_id".to_string()];
    expected.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    expected.push("label".to_string());
    if header != expected {
        return Err(FeatureError::Malformed(format!(
            "header mismatch: expected {expected:?}, found {header:?}"
        )));
    }
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| FeatureError::Malformed(e.to_string()))?;
        if record.len() != FEATURE_DIM + 2 {
            return Err(FeatureError::Malformed(format!("row has {} columns", record.len())));
        }
        let mut nums = [0f64; FEATURE_DIM];
        for (i, slot) in nums.iter_mut().enumerate() {
            *slot = record[i + 1]
                .parse()
                .map_err(|e| FeatureError::Malformed(format!("column {}: {e}", FEATURE_NAMES[i])))?;
        }
        let label = match &record[FEATURE_DIM + 1] {
            "" => None,
            "1" => Some(true),
            "0" => Some(false),
            other => return Err(FeatureError::Malformed(format!("label {other:?}"))),
        };
        out.push(FeatureVector {
            sequence_id: record[0].to_string(),
            statics: StaticFeatureVector {
                unique_paths_count: nums[0],
                total_paths_count: nums[1],
                unique_params_count: nums[2],
                total_params_count: nums[3],
                consecutive_repeats: nums[4],
                avg_path_length: nums[5],
                std_path_length: nums[6],
                avg_param_count: nums[7],
                std_param_count: nums[8],
                avg_path_depth: nums[9],
                std_path_depth: nums[10],
                uniqueness_ratio: nums[11],
                status_code_diversity: nums[12],
            },
            entropy: EntropyFeatureVector {
                h_method: nums[13],
                h_trans_method: nums[14],
                h_status_200: nums[15],
                h_status_403: nums[16],
                h_status_401: nums[17],
                h_status_other: nums[18],
                h_sum_status: nums[19],
                h_trans_status: nums[20],
                h_path: nums[21],
                h_trans_path: nums[22],
            },
            deviation: nums[23],
            label,
        });
    }
    Ok(out)
}

/// Convenience map used by training code: `name -> column index`.
pub fn feature_schema() -> BTreeMap<String, usize> {
    FEATURE_NAMES.iter().enumerate().map(|(i, n)| (n.to_string(), i)).collect()
}
