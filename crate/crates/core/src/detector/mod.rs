//! The gated two-expert classifier: a gradient-boosted tree expert and a
//! neural expert fused by a learned softmax gate,
//!
//! ```text
//! p(x) = g_CB(x)·f_CB(x) + g_MLP(x)·f_MLP(x),   g_CB + g_MLP = 1, g ≥ 0
//! ```
//!
//! so every prediction is a convex combination of the experts. Training is
//! two-stage — experts first, then the gate with expert outputs frozen —
//! because the tree expert is not differentiable, making joint training
//! through it ill-defined.
//!
//! The neural expert and the gate see standardized features (statistics from
//! the training split only); the trees consume raw features.

pub mod gate;
pub mod mlp;
pub mod tree;

pub use gate::{GateConfig, GateNetwork};
pub use mlp::{MlpConfig, NeuralExpert};
pub use tree::{TreeConfig, TreeExpert};

use crate::fsutil::atomic_write;
use crate::seqmodel::{model_from_bytes, model_to_bytes, NextEventModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;
use thiserror::Error;

pub(crate) use tree::validate_training_input;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("training labels are degenerate: both classes must be present")]
    DegenerateLabels,
    #[error("shape mismatch: {rows} feature rows vs {labels} labels")]
    ShapeMismatch { rows: usize, labels: usize },
    #[error("feature schema mismatch: expected {expected} dimensions, found {found}")]
    Schema { expected: usize, found: usize },
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("model bundle io failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("model bundle malformed: {0}")]
    Malformed(String),
}

/// Per-feature affine map to zero mean and unit variance, fit on the
/// training split only. Constant features keep their raw scale (divisor 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let n = x.len() as f64;
        let d = x.first().map_or(0, |r| r.len());
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = vec![0.0; d];
        for row in x {
            for ((sd, v), m) in std.iter_mut().zip(row).zip(&mean) {
                *sd += (v - m) * (v - m);
            }
        }
        for sd in &mut std {
            *sd = (*sd / n).sqrt();
            if *sd == 0.0 {
                *sd = 1.0;
            }
        }
        Standardizer { mean, std }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub tree: TreeConfig,
    pub mlp: MlpConfig,
    pub gate: GateConfig,
    /// Decision cutoff: violation iff p ≥ threshold.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            tree: TreeConfig::default(),
            mlp: MlpConfig::default(),
            gate: GateConfig::default(),
            threshold: 0.5,
            seed: 0,
        }
    }
}

/// The fusion rule: a convex combination of expert probabilities.
pub fn fuse(g: [f64; 2], f_cb: f64, f_mlp: f64) -> f64 {
    g[0] * f_cb + g[1] * f_mlp
}

/// The decision rule: violation iff p ≥ threshold.
pub fn decide(p: f64, threshold: f64) -> bool {
    p >= threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedEnsembleModel {
    pub feature_schema: Vec<String>,
    pub threshold: f64,
    pub standardizer: Standardizer,
    pub tree: TreeExpert,
    pub neural: NeuralExpert,
    pub gate: GateNetwork,
}

impl GatedEnsembleModel {
    pub fn train(
        x: &[Vec<f64>],
        y: &[bool],
        feature_schema: &[String],
        cfg: &DetectorConfig,
    ) -> Result<Self, DetectorError> {
        validate_training_input(x, y)?;
        if x[0].len() != feature_schema.len() {
            return Err(DetectorError::Schema {
                expected: feature_schema.len(),
                found: x[0].len(),
            });
        }
        let standardizer = Standardizer::fit(x);
        let xs: Vec<Vec<f64>> = x.iter().map(|r| standardizer.transform(r)).collect();
        let tree = TreeExpert::train(x, y, &cfg.tree)?;
        let neural = NeuralExpert::train(&xs, y, &cfg.mlp, cfg.seed)?;
        let experts: Vec<(f64, f64)> = x
            .iter()
            .zip(&xs)
            .map(|(raw, std)| (tree.predict_prob(raw), neural.predict_prob(std)))
            .collect();
        let gate = GateNetwork::train(&xs, &experts, y, &cfg.gate, cfg.seed.wrapping_add(1))?;
        Ok(GatedEnsembleModel {
            feature_schema: feature_schema.to_vec(),
            threshold: cfg.threshold,
            standardizer,
            tree,
            neural,
            gate,
        })
    }

    fn check_schema(&self, x: &[f64]) -> Result<(), DetectorError> {
        if x.len() != self.feature_schema.len() {
            return Err(DetectorError::Schema {
                expected: self.feature_schema.len(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// (f_CB, f_MLP, (g_CB, g_MLP)) for one input row.
    pub fn expert_outputs(&self, x: &[f64]) -> Result<(f64, f64, [f64; 2]), DetectorError> {
        self.check_schema(x)?;
        let std = self.standardizer.transform(x);
        Ok((self.tree.predict_prob(x), self.neural.predict_prob(&std), self.gate.weights(&std)))
    }

    /// Fused violation probability per Eq. 6.
    pub fn predict(&self, x: &[f64]) -> Result<f64, DetectorError> {
        let (f_cb, f_mlp, g) = self.expert_outputs(x)?;
        Ok(fuse(g, f_cb, f_mlp))
    }

    /// True = violation.
    pub fn classify(&self, x: &[f64]) -> Result<bool, DetectorError> {
        Ok(decide(self.predict(x)?, self.threshold))
    }
}

/// Bundle directory format version.
pub const BUNDLE_VERSION: u32 = 1;

/// Everything needed to score traffic: the ensemble, the sequence model that
/// produces the deviation feature, and the hash of the knowledge base the
/// features were computed against.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub ensemble: GatedEnsembleModel,
    pub seqmodel: NextEventModel,
    pub kb_sha256: String,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    bundle_version: u32,
    feature_schema: Vec<String>,
    threshold: f64,
    standardizer: Standardizer,
    kb_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `schema.json`, `tree.bin`, `neural.bin`, `gate.bin`, and
/// `seqmodel/model.bin` under `dir`; every file is written atomically.
pub fn save_bundle(dir: &Path, bundle: &ModelBundle) -> Result<(), DetectorError> {
    let schema = SchemaFile {
        bundle_version: BUNDLE_VERSION,
        feature_schema: bundle.ensemble.feature_schema.clone(),
        threshold: bundle.ensemble.threshold,
        standardizer: bundle.ensemble.standardizer.clone(),
        kb_sha256: bundle.kb_sha256.clone(),
    };
    let mut schema_json =
        serde_json::to_string_pretty(&schema).map_err(|e| DetectorError::Malformed(e.to_string()))?;
    schema_json.push('\n');
    atomic_write(&dir.join("schema.json"), schema_json.as_bytes())?;
    let encode = |v: Result<Vec<u8>, bincode::Error>| {
        v.map_err(|e| DetectorError::Malformed(e.to_string()))
    };
    atomic_write(&dir.join("tree.bin"), &encode(bincode::serialize(&bundle.ensemble.tree))?)?;
    atomic_write(&dir.join("neural.bin"), &encode(bincode::serialize(&bundle.ensemble.neural))?)?;
    atomic_write(&dir.join("gate.bin"), &encode(bincode::serialize(&bundle.ensemble.gate))?)?;
    atomic_write(&dir.join("seqmodel").join("model.bin"), &model_to_bytes(&bundle.seqmodel))?;
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<ModelBundle, DetectorError> {
    let schema_bytes = fs::read(dir.join("schema.json"))?;
    let schema: SchemaFile = serde_json::from_slice(&schema_bytes)
        .map_err(|e| DetectorError::Malformed(format!("schema.json: {e}")))?;
    if schema.bundle_version != BUNDLE_VERSION {
        return Err(DetectorError::Malformed(format!(
            "unsupported bundle_version {}",
            schema.bundle_version
        )));
    }
    let tree: TreeExpert = bincode::deserialize(&fs::read(dir.join("tree.bin"))?)
        .map_err(|e| DetectorError::Malformed(format!("tree.bin: {e}")))?;
    let neural: NeuralExpert = bincode::deserialize(&fs::read(dir.join("neural.bin"))?)
        .map_err(|e| DetectorError::Malformed(format!("neural.bin: {e}")))?;
    let gate: GateNetwork = bincode::deserialize(&fs::read(dir.join("gate.bin"))?)
        .map_err(|e| DetectorError::Malformed(format!("gate.bin: {e}")))?;
    let seqmodel = model_from_bytes(&fs::read(dir.join("seqmodel").join("model.bin"))?)
        .map_err(|e| DetectorError::Malformed(e.to_string()))?;
    Ok(ModelBundle {
        ensemble: GatedEnsembleModel {
            feature_schema: schema.feature_schema,
            threshold: schema.threshold,
            standardizer: schema.standardizer,
            tree,
            neural,
            gate,
        },
        seqmodel,
        kb_sha256: schema.kb_sha256,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miner::mine_templates;
    use crate::seqmodel::SeqTrainConfig;
    use crate::traffic::{Method, SequenceRole, TrafficRecord, TrafficSequence};
    use indexmap::IndexMap;

    fn small_config() -> DetectorConfig {
        DetectorConfig {
            tree: TreeConfig { iterations: 30, ..TreeConfig::default() },
            mlp: MlpConfig { epochs: 30, ..MlpConfig::default() },
            gate: GateConfig { epochs: 30, ..GateConfig::default() },
            threshold: 0.5,
            seed: 0,
        }
    }

    fn toy_data() -> (Vec<Vec<f64>>, Vec<bool>, Vec<String>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..30 {
            let t = i as f64 * 0.1;
            x.push(vec![t, 5.0 - t, 1.0]);
            y.push(false);
            x.push(vec![t + 6.0, t, -1.0]);
            y.push(true);
        }
        let schema = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        (x, y, schema)
    }

    #[test]
    fn fusion_worked_example() {
        let p = fuse([0.3, 0.7], 0.9, 0.1);
        assert!((p - 0.34).abs() < 1e-12);
    }

    #[test]
    fn fusion_endpoints_and_equal_experts() {
        assert_eq!(fuse([1.0, 0.0], 0.77, 0.2), 0.77);
        let q = 0.42;
        for g0 in [0.0, 0.25, 0.5, 1.0] {
            assert!((fuse([g0, 1.0 - g0], q, q) - q).abs() < 1e-12);
        }
    }

    #[test]
    fn decision_rule_boundary() {
        assert!(decide(0.5, 0.5));
        assert!(!decide(0.49, 0.5));
        // Raising the threshold never adds positives.
        let ps = [0.1, 0.3, 0.5, 0.7, 0.9];
        let mut prev = usize::MAX;
        for thr in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
            let n = ps.iter().filter(|&&p| decide(p, thr)).count();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn standardizer_zero_mean_unit_variance() {
        let x = vec![vec![1.0, 10.0], vec![3.0, 10.0], vec![5.0, 10.0]];
        let s = Standardizer::fit(&x);
        let t: Vec<Vec<f64>> = x.iter().map(|r| s.transform(r)).collect();
        let mean0: f64 = t.iter().map(|r| r[0]).sum::<f64>() / 3.0;
        let var0: f64 = t.iter().map(|r| r[0] * r[0]).sum::<f64>() / 3.0;
        assert!(mean0.abs() < 1e-12);
        assert!((var0 - 1.0).abs() < 1e-12);
        // Constant column passes through centered, not divided by zero.
        assert!(t.iter().all(|r| r[1] == 0.0));
    }

    #[test]
    fn ensemble_predictions_are_convex_and_bounded() {
        let (x, y, schema) = toy_data();
        let model = GatedEnsembleModel::train(&x, &y, &schema, &small_config()).unwrap();
        for xi in &x {
            let (f_cb, f_mlp, g) = model.expert_outputs(xi).unwrap();
            let p = model.predict(xi).unwrap();
            assert!((g[0] + g[1] - 1.0).abs() < 1e-9);
            assert!(g[0] >= 0.0 && g[1] >= 0.0);
            assert!(p >= f_cb.min(f_mlp) - 1e-12 && p <= f_cb.max(f_mlp) + 1e-12);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let (x, y, schema) = toy_data();
        let model = GatedEnsembleModel::train(&x, &y, &schema, &small_config()).unwrap();
        assert!(matches!(
            model.predict(&[1.0, 2.0]),
            Err(DetectorError::Schema { expected: 3, found: 2 })
        ));
        assert!(matches!(
            GatedEnsembleModel::train(&x, &y, &schema[..2].to_vec(), &small_config()),
            Err(DetectorError::Schema { .. })
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y, schema) = toy_data();
        let a = GatedEnsembleModel::train(&x, &y, &schema, &small_config()).unwrap();
        let b = GatedEnsembleModel::train(&x, &y, &schema, &small_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(bincode::serialize(&a).unwrap(), bincode::serialize(&b).unwrap());
    }

    fn tiny_seqmodel() -> NextEventModel {
        let records: Vec<TrafficRecord> = (0..4)
            .map(|i| TrafficRecord {
                timestamp: i,
                session_id: "s".into(),
                identity: "u".into(),
                method: Method::GET,
                path: if i % 2 == 0 { "/a".into() } else { "/b".into() },
                query_params: IndexMap::new(),
                status: 200,
                template_id: None,
            })
            .collect();
        let templates = mine_templates(&records, 0.5, 4).unwrap();
        let seq =
            TrafficSequence::new("s#0", records, SequenceRole::Benign, None, None).unwrap();
        NextEventModel::train(&[seq], &templates, &SeqTrainConfig::default()).unwrap()
    }

    #[test]
    fn bundle_round_trip() {
        let (x, y, schema) = toy_data();
        let model = GatedEnsembleModel::train(&x, &y, &schema, &small_config()).unwrap();
        let bundle = ModelBundle {
            ensemble: model,
            seqmodel: tiny_seqmodel(),
            kb_sha256: sha256_hex(b"{}"),
        };
        let dir = tempfile::tempdir().unwrap();
        save_bundle(dir.path(), &bundle).unwrap();
        for f in ["schema.json", "tree.bin", "neural.bin", "gate.bin"] {
            assert!(dir.path().join(f).exists(), "missing {f}");
        }
        assert!(dir.path().join("seqmodel/model.bin").exists());
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.ensemble, bundle.ensemble);
        assert_eq!(back.kb_sha256, bundle.kb_sha256);
        let p0 = bundle.ensemble.predict(&x[0]).unwrap();
        assert_eq!(back.ensemble.predict(&x[0]).unwrap(), p0);
    }

    #[test]
    fn bundle_version_is_checked() {
        let (x, y, schema) = toy_data();
        let model = GatedEnsembleModel::train(&x, &y, &schema, &small_config()).unwrap();
        let bundle =
            ModelBundle { ensemble: model, seqmodel: tiny_seqmodel(), kb_sha256: "00".into() };
        let dir = tempfile::tempdir().unwrap();
        save_bundle(dir.path(), &bundle).unwrap();
        let schema_path = dir.path().join("schema.json");
        let text = fs::read_to_string(&schema_path)
            .unwrap()
            .replace("\"bundle_version\": 1", "\"bundle_version\": 9");
        fs::write(&schema_path, text).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(DetectorError::Malformed(_))));
    }

    #[test]
    fn sha256_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
