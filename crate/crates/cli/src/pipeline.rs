//! Shared plumbing between verbs: artifact loading and featurization.

use crate::errors::CliError;
use bacalarm_core::features::{self, FeatureVector};
use bacalarm_core::miner::{kb_from_json, KnowledgeItem, ApiTemplate};
use bacalarm_core::seqmodel::NextEventModel;
use bacalarm_core::traffic::{read_corpus, read_records, TrafficRecord, TrafficSequence};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

/// Loads a knowledge base, returning the items and the raw file bytes (the
/// bytes feed the bundle's kb hash).
pub fn load_kb(path: &Path) -> Result<(Vec<KnowledgeItem>, Vec<u8>), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Input(format!("knowledge base {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| CliError::Input(format!("knowledge base {}: {e}", path.display())))?;
    let items = kb_from_json(text)?;
    Ok((items, bytes))
}

pub fn load_corpus(path: &Path) -> Result<Vec<TrafficSequence>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Input(format!("corpus {}: {e}", path.display())))?;
    Ok(read_corpus(BufReader::new(file))?)
}

pub fn load_log(path: &Path) -> Result<Vec<TrafficRecord>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Input(format!("log {}: {e}", path.display())))?;
    Ok(read_records(BufReader::new(file))?)
}

/// Assembles the full feature matrix for `sequences`. Without a sequence
/// model the deviation column is 0.0 (the static and entropy features are
/// model-free).
pub fn featurize_sequences(
    sequences: &[TrafficSequence],
    templates: &[ApiTemplate],
    seqmodel: Option<&NextEventModel>,
) -> Vec<FeatureVector> {
    sequences
        .iter()
        .map(|seq| {
            let deviation = seqmodel.map_or(0.0, |m| m.deviation(seq, templates));
            features::assemble(
                &seq.sequence_id,
                features::static_features(seq),
                features::entropy_features(seq),
                deviation,
                seq.violation,
            )
        })
        .collect()
}

/// Violation labels for a labeled corpus; any unlabeled sequence is an
/// input error (training and evaluation both need ground truth).
pub fn violation_labels(sequences: &[TrafficSequence]) -> Result<Vec<bool>, CliError> {
    sequences
        .iter()
        .map(|s| {
            s.violation.ok_or_else(|| {
                CliError::Input(format!("sequence {} carries no violation label", s.sequence_id))
            })
        })
        .collect()
}
