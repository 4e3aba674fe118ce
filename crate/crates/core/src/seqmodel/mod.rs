//! Autoregressive next-event modeling over API-template tokens.
//!
//! Sequences are tokenized against the mined templates (one token per
//! template, plus `BOS` and `UNK`), a next-event model is fit by maximum
//! likelihood on benign traffic, and each scored sequence yields per-event
//! surprisals S_t = −ln P(E_t | E_1…E_{t−1}) that are combined into a single
//! deviation score with exponential positional weighting, so late-sequence
//! anomalies dominate.
//!
//! Two interchangeable backends sit behind [`NextEventModel`]: `ngram`, an
//! interpolated bigram/unigram estimator with additive smoothing that an
//! exact counting oracle can verify, and `attention`, a causally masked
//! self-attention encoder trained with a decoupled-weight-decay optimizer.

pub mod attention;
pub mod ngram;

use crate::miner::{match_template, ApiTemplate};
use crate::traffic::{SequenceRole, TrafficSequence};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub use attention::{AttentionConfig, TransformerModel};
pub use ngram::NgramModel;

/// Beginning-of-sequence token: supplies the t = 1 context.
pub const BOS: u32 = 0;
/// Token for records that match no mined template.
pub const UNK: u32 = 1;

#[derive(Debug, Error)]
pub enum SeqModelError {
    #[error("cannot train a sequence model on an empty corpus")]
    EmptyCorpus,
    #[error("sequence {sequence_id:?} is not benign-labeled; the deviation model must see benign traffic only")]
    LabelLeak { sequence_id: String },
    #[error("deviation score of an empty score list is undefined")]
    EmptyInput,
    #[error("sequence model blob malformed: {0}")]
    Malformed(String),
}

/// Dense token table: `BOS`, `UNK`, then one token per template in
/// ascending `template_id` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventVocabulary {
    tokens: BTreeMap<u64, u32>,
}

impl EventVocabulary {
    pub fn build(templates: &[ApiTemplate]) -> Self {
        let mut ids: Vec<u64> = templates.iter().map(|t| t.template_id).collect();
        ids.sort_unstable();
        ids.dedup();
        let tokens = ids.into_iter().enumerate().map(|(i, id)| (id, i as u32 + 2)).collect();
        EventVocabulary { tokens }
    }

    /// Vocabulary size |V| including the two specials.
    pub fn size(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn token_for(&self, template_id: Option<u64>) -> u32 {
        template_id.and_then(|id| self.tokens.get(&id).copied()).unwrap_or(UNK)
    }
}

/// Maps a sequence to `[BOS, tok(E_1), …, tok(E_T)]` (length T + 1); records
/// matching no template become `UNK`.
pub fn tokenize(seq: &TrafficSequence, templates: &[ApiTemplate], vocab: &EventVocabulary) -> Vec<u32> {
    let mut out = Vec::with_capacity(seq.len() + 1);
    out.push(BOS);
    for record in &seq.records {
        out.push(vocab.token_for(match_template(record, templates)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Ngram,
    Attention,
}

/// Training configuration; the `ngram` backend is the default because its
/// estimates are exactly checkable against a counting oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeqTrainConfig {
    pub backend: Backend,
    /// Additive smoothing mass for the ngram backend.
    pub delta: f64,
    pub attention: AttentionConfig,
    pub seed: u64,
}

impl Default for SeqTrainConfig {
    fn default() -> Self {
        SeqTrainConfig {
            backend: Backend::Ngram,
            delta: 0.1,
            attention: AttentionConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BackendModel {
    Ngram(NgramModel),
    Attention(TransformerModel),
}

/// A trained autoregressive next-event model. Immutable once trained; safe
/// to score from multiple threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NextEventModel {
    pub vocab: EventVocabulary,
    pub backend: BackendModel,
}

impl NextEventModel {
    /// Fits the configured backend on benign sequences only. Malicious or
    /// unlabeled input is rejected rather than silently skipped, so a label
    /// leak upstream fails loudly.
    pub fn train(
        sequences: &[TrafficSequence],
        templates: &[ApiTemplate],
        config: &SeqTrainConfig,
    ) -> Result<Self, SeqModelError> {
        if sequences.is_empty() {
            return Err(SeqModelError::EmptyCorpus);
        }
        for seq in sequences {
            if seq.role != SequenceRole::Benign {
                return Err(SeqModelError::LabelLeak { sequence_id: seq.sequence_id.clone() });
            }
        }
        let vocab = EventVocabulary::build(templates);
        let token_streams: Vec<Vec<u32>> =
            sequences.iter().map(|s| tokenize(s, templates, &vocab)).collect();
        let backend = match config.backend {
            Backend::Ngram => {
                BackendModel::Ngram(NgramModel::fit(&token_streams, vocab.size(), config.delta))
            }
            Backend::Attention => BackendModel::Attention(TransformerModel::fit(
                &token_streams,
                vocab.size(),
                &config.attention,
                config.seed,
            )),
        };
        Ok(NextEventModel { vocab, backend })
    }

    /// P(next | context); `context` is a nonempty token stream starting at
    /// `BOS`. Strictly positive for every vocabulary token.
    pub fn next_prob(&self, context: &[u32], next: u32) -> f64 {
        match &self.backend {
            BackendModel::Ngram(m) => m.next_prob(context, next),
            BackendModel::Attention(m) => m.next_distribution(context)[next as usize],
        }
    }

    /// Full next-token distribution over the vocabulary for a context.
    pub fn next_distribution(&self, context: &[u32]) -> Vec<f64> {
        match &self.backend {
            BackendModel::Ngram(m) => m.next_distribution(context),
            BackendModel::Attention(m) => m.next_distribution(context),
        }
    }

    /// Per-event surprisals S_t = −ln P(E_t | E_1…E_{t−1}) for t = 1…T over
    /// a tokenized stream `[BOS, E_1, …, E_T]`.
    pub fn per_event_scores_tokens(&self, tokens: &[u32]) -> Vec<f64> {
        match &self.backend {
            BackendModel::Ngram(m) => (1..tokens.len())
                .map(|t| -m.next_prob(&tokens[..t], tokens[t]).ln())
                .collect(),
            BackendModel::Attention(m) => {
                m.sequence_probs(tokens).into_iter().map(|p| -p.ln()).collect()
            }
        }
    }

    /// Tokenizes and scores a sequence in one step.
    pub fn per_event_scores(&self, seq: &TrafficSequence, templates: &[ApiTemplate]) -> Vec<f64> {
        self.per_event_scores_tokens(&tokenize(seq, templates, &self.vocab))
    }

    /// Deviation score of a sequence: tokenize, score, weight.
    pub fn deviation(&self, seq: &TrafficSequence, templates: &[ApiTemplate]) -> f64 {
        let scores = self.per_event_scores(seq, templates);
        deviation_score(&scores).expect("sequences are nonempty by construction")
    }
}

/// Unnormalized positional weights exp(t/T) for t = 1…T; strictly
/// increasing, so later events dominate the deviation score.
pub fn positional_weights(t_len: usize) -> Vec<f64> {
    (1..=t_len).map(|t| (t as f64 / t_len as f64).exp()).collect()
}

/// S = Σ_t S_t·exp(t/T) / Σ_t exp(t/T), t = 1…T.
pub fn deviation_score(per_event: &[f64]) -> Result<f64, SeqModelError> {
    if per_event.is_empty() {
        return Err(SeqModelError::EmptyInput);
    }
    let weights = positional_weights(per_event.len());
    let num: f64 = per_event.iter().zip(&weights).map(|(s, w)| s * w).sum();
    let den: f64 = weights.iter().sum();
    Ok(num / den)
}

/// Blob format version for serialized models.
pub const SEQMODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SeqModelWire {
    seqmodel_version: u32,
    model: NextEventModel,
}

/// Serializes a model with its version tag.
pub fn model_to_bytes(model: &NextEventModel) -> Vec<u8> {
    bincode::serialize(&SeqModelWire { seqmodel_version: SEQMODEL_VERSION, model: model.clone() })
        .expect("sequence model is serializable")
}

/// Deserializes a model, rejecting unknown versions.
pub fn model_from_bytes(bytes: &[u8]) -> Result<NextEventModel, SeqModelError> {
    let wire: SeqModelWire =
        bincode::deserialize(bytes).map_err(|e| SeqModelError::Malformed(e.to_string()))?;
    if wire.seqmodel_version != SEQMODEL_VERSION {
        return Err(SeqModelError::Malformed(format!(
            "unsupported seqmodel_version {}",
            wire.seqmodel_version
        )));
    }
    Ok(wire.model)
}
