//! Declarative pipeline configuration.
//!
//! One TOML file drives the whole pipeline; every verb takes flag overrides
//! that win over the file. All seeds are explicit — nothing falls back to
//! the wall clock, so a fixed (config, seed) pair replays byte-identically.

use crate::errors::CliError;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsSection,
    pub miner: MinerSection,
    pub windowing: WindowSection,
    pub simulator: SimSection,
    pub training: TrainSection,
    pub evaluation: EvalSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Raw access-log input for `mine`.
    pub log: PathBuf,
    /// Knowledge-base JSON artifact.
    pub kb: PathBuf,
    /// Labeled corpus in the line-delimited format.
    pub corpus: PathBuf,
    /// Model bundle directory.
    pub bundle: PathBuf,
    /// Feature-matrix CSV from `featurize`.
    pub features: PathBuf,
    /// Verdict lines from `detect`.
    pub verdicts: PathBuf,
    /// Directory receiving `report.md` + `metrics.json` from `eval`.
    pub report_dir: PathBuf,
    /// Generation report JSON from `simulate`.
    pub sim_report: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            log: "access.log".into(),
            kb: "kb.json".into(),
            corpus: "corpus.log".into(),
            bundle: "model".into(),
            features: "features.csv".into(),
            verdicts: "verdicts.jsonl".into(),
            report_dir: "eval".into(),
            sim_report: "sim_report.json".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinerSection {
    pub similarity_threshold: f64,
    pub depth: usize,
}

impl Default for MinerSection {
    fn default() -> Self {
        Self { similarity_threshold: 0.5, depth: 4 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    /// Inactivity gap splitting a session into sequences.
    pub gap_ms: i64,
}

impl Default for WindowSection {
    fn default() -> Self {
        Self { gap_ms: 1_800_000 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Kept-sequence target.
    pub n: usize,
    pub target_base_url: String,
    pub own_cookie: String,
    pub foreign_cookie: String,
    pub llm_base_url: String,
    pub model: String,
    pub temperature: f64,
    pub parallelism: usize,
    pub attempt_factor: usize,
    pub max_repairs: usize,
    pub retrieval_k: usize,
    /// Delegate behavior descriptions to the LLM (phrase bank otherwise).
    pub llm_behavior: bool,
    pub seed: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            n: 500,
            target_base_url: "http://127.0.0.1:8080".into(),
            own_cookie: "own-session".into(),
            foreign_cookie: "foreign-session".into(),
            llm_base_url: "http://127.0.0.1:8000".into(),
            model: "deepseek-r1".into(),
            temperature: 0.7,
            parallelism: 1,
            attempt_factor: 3,
            max_repairs: 2,
            retrieval_k: 8,
            llm_behavior: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Sequence-model backend: "ngram" or "attention".
    pub backend: String,
    pub seed: u64,
    /// Decision threshold persisted into the bundle.
    pub threshold: f64,
    /// Gradient-boosting iterations (None = library default).
    pub iterations: Option<usize>,
    /// MLP/gate epochs (None = library default).
    pub epochs: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { backend: "ngram".into(), seed: 0, threshold: 0.5, iterations: None, epochs: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Stratified train share. `train` and `eval` both derive the split
    /// from (this, training.seed), so evaluation never sees training rows.
    pub train_frac: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { train_frac: 0.8 }
    }
}

impl PipelineConfig {
    /// Loads the file when given, defaults otherwise. Unknown keys are
    /// rejected — a typo silently ignored is a run silently misconfigured.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Input(format!("config {}: {e}", p.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Input(format!("config {}: {e}", p.display())))
            }
        }
    }
}
