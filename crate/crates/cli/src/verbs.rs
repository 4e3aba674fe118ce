//! The seven pipeline verbs.
//!
//! Each verb resolves its inputs as flag-over-config, does its work through
//! the library crates, and persists artifacts atomically. Fixed config +
//! seed replays byte-identically (live-LLM simulation excepted: its report
//! carries real wall time and token counts).

use crate::cli::{
    DetectArgs, EvalArgs, FeaturizeArgs, MineArgs, ReportArgs, SimulateArgs, TrainArgs,
};
use crate::config::PipelineConfig;
use crate::errors::CliError;
use crate::pipeline::{featurize_sequences, load_corpus, load_kb, load_log, violation_labels};
use crate::util::atomic_write;
use bacalarm_core::detector::{
    decide, load_bundle, save_bundle, sha256_hex, DetectorConfig, ModelBundle,
};
use bacalarm_core::eval::{
    api_coverage, confusion, emit_report, metrics, report_from_json, report_to_markdown,
    split_indices,
};
use bacalarm_core::features::{write_matrix, FEATURE_DIM, FEATURE_NAMES};
use bacalarm_core::miner::{build_knowledge_base, kb_templates, kb_to_json, mine_templates};
use bacalarm_core::seqmodel::{Backend, NextEventModel, SeqTrainConfig};
use bacalarm_core::traffic::{window_sessions, write_corpus, SequenceRole, TrafficSequence};
use bacalarm_sim::{
    generate, synth_generate, Executor, GenerateConfig, GenerationReport, LlmClient, LlmConfig,
};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Global invocation context: the loaded config plus the global flags.
pub struct Ctx {
    pub config: PipelineConfig,
    pub seed: Option<u64>,
    pub offline: bool,
}

fn path_of(flag: &Option<PathBuf>, fallback: &Path) -> PathBuf {
    flag.clone().unwrap_or_else(|| fallback.to_path_buf())
}

pub fn cmd_mine(ctx: &Ctx, args: &MineArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let log = path_of(&args.log, &cfg.paths.log);
    let out = path_of(&args.out, &cfg.paths.kb);
    let threshold = args.similarity_threshold.unwrap_or(cfg.miner.similarity_threshold);
    let depth = args.depth.unwrap_or(cfg.miner.depth);
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CliError::Usage(format!(
            "--similarity-threshold must lie in (0, 1], got {threshold}"
        )));
    }
    if depth < 2 {
        return Err(CliError::Usage(format!("--depth must be at least 2, got {depth}")));
    }

    let records = load_log(&log)?;
    let templates = mine_templates(&records, threshold, depth)?;
    let items = build_knowledge_base(&records, &templates)?;
    let mut json = kb_to_json(&items);
    json.push('\n');
    atomic_write(&out, json.as_bytes())?;

    let sequences = window_sessions(records, cfg.windowing.gap_ms.max(1));
    let cov = api_coverage(&sequences, &items);
    println!("mined {} templates (cov_api {cov:.4}) -> {}", items.len(), out.display());
    Ok(())
}

pub fn cmd_simulate(ctx: &Ctx, args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let n = args.n.unwrap_or(cfg.simulator.n);
    if n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let kb_path = path_of(&args.kb, &cfg.paths.kb);
    let out = path_of(&args.out, &cfg.paths.corpus);
    let report_path = path_of(&args.report, &cfg.paths.sim_report);
    let seed = ctx.seed.unwrap_or(cfg.simulator.seed);
    let (kb, _) = load_kb(&kb_path)?;

    let (sequences, report) = if ctx.offline {
        let sequences = synth_generate(&kb, n, seed)?;
        // The offline generator keeps everything it makes; wall time is
        // zeroed so reruns stay byte-identical.
        let report = GenerationReport {
            attempts: sequences.len() as u64,
            kept: sequences.len() as u64,
            ..GenerationReport::default()
        };
        (sequences, report)
    } else {
        let mut llm_cfg =
            LlmConfig::new(args.llm_url.clone().unwrap_or_else(|| cfg.simulator.llm_base_url.clone()));
        llm_cfg.model = cfg.simulator.model.clone();
        llm_cfg.temperature = cfg.simulator.temperature;
        let llm = LlmClient::new(llm_cfg);
        let executor = Executor::new(
            args.target_url.clone().unwrap_or_else(|| cfg.simulator.target_base_url.clone()),
            cfg.simulator.own_cookie.clone(),
            cfg.simulator.foreign_cookie.clone(),
        );
        let gen_cfg = GenerateConfig {
            n,
            attempt_factor: cfg.simulator.attempt_factor,
            max_repairs: cfg.simulator.max_repairs,
            retrieval_k: cfg.simulator.retrieval_k,
            parallelism: args.parallelism.unwrap_or(cfg.simulator.parallelism).max(1),
            seed,
            llm_behavior: cfg.simulator.llm_behavior,
            ..GenerateConfig::default()
        };
        generate(&kb, &llm, &executor, &gen_cfg)?
    };

    let mut corpus_bytes = Vec::new();
    write_corpus(&sequences, &mut corpus_bytes)?;
    atomic_write(&out, &corpus_bytes)?;
    let mut report_json =
        serde_json::to_string_pretty(&report).expect("report is serializable");
    report_json.push('\n');
    atomic_write(&report_path, report_json.as_bytes())?;

    println!(
        "kept {}/{} attempts (hallucination {}, parse {}, incomplete {}), {} llm tokens -> {}",
        report.kept,
        report.attempts,
        report.discarded_hallucination,
        report.discarded_parse,
        report.incomplete,
        report.llm_tokens,
        out.display()
    );
    if report.kept == 0 {
        eprintln!("warning: no sequences survived the filter; corpus is empty");
    }
    Ok(())
}

pub fn cmd_featurize(ctx: &Ctx, args: &FeaturizeArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let corpus_path = path_of(&args.corpus, &cfg.paths.corpus);
    let kb_path = path_of(&args.kb, &cfg.paths.kb);
    let out = path_of(&args.out, &cfg.paths.features);
    let bundle_dir = path_of(&args.bundle, &cfg.paths.bundle);

    let sequences = load_corpus(&corpus_path)?;
    let (kb, kb_bytes) = load_kb(&kb_path)?;
    let templates = kb_templates(&kb);

    // The deviation feature needs a trained sequence model; without a bundle
    // the column is 0.0 so the matrix stays schema-complete.
    let bundle = if bundle_dir.join("schema.json").is_file() {
        let bundle = load_bundle(&bundle_dir)?;
        verify_kb_binding(&bundle, &kb_bytes)?;
        Some(bundle)
    } else {
        eprintln!(
            "note: no bundle at {}; deviation column defaults to 0.0",
            bundle_dir.display()
        );
        None
    };
    let vectors =
        featurize_sequences(&sequences, &templates, bundle.as_ref().map(|b| &b.seqmodel));

    let mut csv_bytes = Vec::new();
    write_matrix(&vectors, &mut csv_bytes)?;
    atomic_write(&out, &csv_bytes)?;
    println!("featurized {} sequences x {FEATURE_DIM} features -> {}", vectors.len(), out.display());
    Ok(())
}

pub fn cmd_train(ctx: &Ctx, args: &TrainArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let corpus_path = path_of(&args.corpus, &cfg.paths.corpus);
    let kb_path = path_of(&args.kb, &cfg.paths.kb);
    let out = path_of(&args.out, &cfg.paths.bundle);
    let train_frac = args.train_frac.unwrap_or(cfg.evaluation.train_frac);
    validate_train_frac(train_frac)?;
    let seed = ctx.seed.unwrap_or(cfg.training.seed);
    let backend = parse_backend(args.backend.as_deref().unwrap_or(&cfg.training.backend))?;
    let threshold = args.threshold.unwrap_or(cfg.training.threshold);

    let sequences = load_corpus(&corpus_path)?;
    let (kb, kb_bytes) = load_kb(&kb_path)?;
    let templates = kb_templates(&kb);
    let labels = violation_labels(&sequences)?;

    // Train and eval derive the same stratified split from (train_frac,
    // seed); everything below touches only the train partition, so eval's
    // complement stays unseen.
    let (train_idx, _) = split_indices(&labels, train_frac, seed)?;
    let train_seqs: Vec<TrafficSequence> =
        train_idx.iter().map(|&i| sequences[i].clone()).collect();
    let y_train: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();

    let benign_train: Vec<TrafficSequence> = train_seqs
        .iter()
        .filter(|s| s.role == SequenceRole::Benign)
        .cloned()
        .collect();
    let mut seq_cfg = SeqTrainConfig { backend, seed, ..SeqTrainConfig::default() };
    if let Some(epochs) = cfg.training.epochs {
        seq_cfg.attention.epochs = epochs;
    }
    let seqmodel = NextEventModel::train(&benign_train, &templates, &seq_cfg)?;

    let vectors = featurize_sequences(&train_seqs, &templates, Some(&seqmodel));
    let x_train: Vec<Vec<f64>> = vectors.iter().map(|v| v.to_array().to_vec()).collect();

    let mut det_cfg = DetectorConfig { threshold, seed, ..DetectorConfig::default() };
    if let Some(iterations) = cfg.training.iterations {
        det_cfg.tree.iterations = iterations;
    }
    if let Some(epochs) = cfg.training.epochs {
        det_cfg.mlp.epochs = epochs;
    }
    let schema: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let ensemble = bacalarm_core::detector::GatedEnsembleModel::train(
        &x_train, &y_train, &schema, &det_cfg,
    )?;

    let bundle =
        ModelBundle { ensemble, seqmodel, kb_sha256: sha256_hex(&kb_bytes) };
    save_bundle(&out, &bundle)?;

    let preds: Vec<bool> = x_train
        .iter()
        .map(|row| bundle.ensemble.classify(row))
        .collect::<Result<_, _>>()?;
    let train_report = metrics(&confusion(&preds, &y_train)?);
    println!(
        "trained on {} sequences (acc {:.4}, f1 {:.4}, mcc {:.4}) -> {}",
        train_seqs.len(),
        train_report.acc,
        train_report.f1,
        train_report.mcc,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct VerdictLine<'a> {
    sequence_id: &'a str,
    probability: f64,
    label: &'static str,
}

pub fn cmd_detect(ctx: &Ctx, args: &DetectArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let input = path_of(&args.input, &cfg.paths.log);
    let kb_path = path_of(&args.kb, &cfg.paths.kb);
    let bundle_dir = path_of(&args.bundle, &cfg.paths.bundle);
    let out = path_of(&args.out, &cfg.paths.verdicts);
    let gap_ms = args.gap_ms.unwrap_or(cfg.windowing.gap_ms);
    if gap_ms <= 0 {
        return Err(CliError::Usage(format!("--gap-ms must be positive, got {gap_ms}")));
    }

    let bundle = load_bundle(&bundle_dir)?;
    let (kb, kb_bytes) = load_kb(&kb_path)?;
    verify_kb_binding(&bundle, &kb_bytes)?;
    let templates = kb_templates(&kb);

    let records = load_log(&input)?;
    let sequences = window_sessions(records, gap_ms);
    let vectors = featurize_sequences(&sequences, &templates, Some(&bundle.seqmodel));

    let threshold = bundle.ensemble.threshold;
    let mut lines = String::new();
    let mut violations = 0usize;
    for v in &vectors {
        let p = bundle.ensemble.predict(&v.to_array())?;
        let verdict = decide(p, threshold);
        violations += verdict as usize;
        let line = VerdictLine {
            sequence_id: &v.sequence_id,
            probability: p,
            label: if verdict { "violation" } else { "benign" },
        };
        lines.push_str(&serde_json::to_string(&line).expect("verdict is serializable"));
        lines.push('\n');
    }
    atomic_write(&out, lines.as_bytes())?;
    println!("scored {} sequences ({violations} violation) -> {}", vectors.len(), out.display());
    Ok(())
}

pub fn cmd_eval(ctx: &Ctx, args: &EvalArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let corpus_path = path_of(&args.corpus, &cfg.paths.corpus);
    let kb_path = path_of(&args.kb, &cfg.paths.kb);
    let bundle_dir = path_of(&args.bundle, &cfg.paths.bundle);
    let out_dir = path_of(&args.out, &cfg.paths.report_dir);
    let train_frac = args.train_frac.unwrap_or(cfg.evaluation.train_frac);
    validate_train_frac(train_frac)?;
    let seed = ctx.seed.unwrap_or(cfg.training.seed);

    let bundle = load_bundle(&bundle_dir)?;
    let (kb, kb_bytes) = load_kb(&kb_path)?;
    verify_kb_binding(&bundle, &kb_bytes)?;
    let templates = kb_templates(&kb);
    let threshold = args.threshold.unwrap_or(bundle.ensemble.threshold);

    // Either a dedicated test corpus, or the held-out side of the same
    // stratified split cmd_train used.
    let test_seqs: Vec<TrafficSequence> = match &args.test {
        Some(test_path) => load_corpus(test_path)?,
        None => {
            let sequences = load_corpus(&corpus_path)?;
            let labels = violation_labels(&sequences)?;
            let (_, test_idx) = split_indices(&labels, train_frac, seed)?;
            test_idx.into_iter().map(|i| sequences[i].clone()).collect()
        }
    };
    let y_test = violation_labels(&test_seqs)?;

    let vectors = featurize_sequences(&test_seqs, &templates, Some(&bundle.seqmodel));
    let preds: Vec<bool> = vectors
        .iter()
        .map(|v| bundle.ensemble.predict(&v.to_array()).map(|p| decide(p, threshold)))
        .collect::<Result<_, _>>()?;

    let mut report = metrics(&confusion(&preds, &y_test)?);
    report.cov_api = Some(api_coverage(&test_seqs, &kb));
    // wall_ms stays None: eval output must be byte-identical across reruns.
    let (md_path, json_path) = emit_report(&report, &out_dir)?;
    print!("{}", report_to_markdown(&report));
    eprintln!("wrote {} and {}", md_path.display(), json_path.display());
    Ok(())
}

pub fn cmd_report(ctx: &Ctx, args: &ReportArgs) -> Result<(), CliError> {
    let metrics_path = args
        .metrics
        .clone()
        .unwrap_or_else(|| ctx.config.paths.report_dir.join("metrics.json"));
    let text = std::fs::read_to_string(&metrics_path)
        .map_err(|e| CliError::Input(format!("metrics {}: {e}", metrics_path.display())))?;
    let report = report_from_json(&text)?;
    print!("{}", report_to_markdown(&report));
    Ok(())
}

/// Checked before any file I/O so a bad fraction is always a usage error.
fn validate_train_frac(frac: f64) -> Result<(), CliError> {
    if frac > 0.0 && frac < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--train-frac must be in (0, 1), got {frac}")))
    }
}

fn parse_backend(name: &str) -> Result<Backend, CliError> {
    match name {
        "ngram" => Ok(Backend::Ngram),
        "attention" => Ok(Backend::Attention),
        other => Err(CliError::Usage(format!(
            "unknown backend {other:?} (expected \"ngram\" or \"attention\")"
        ))),
    }
}

/// A bundle scores features computed against exactly one knowledge base;
/// detecting with a different kb would silently shift every template match.
fn verify_kb_binding(bundle: &ModelBundle, kb_bytes: &[u8]) -> Result<(), CliError> {
    let actual = sha256_hex(kb_bytes);
    if bundle.kb_sha256 != actual {
        return Err(CliError::Schema(format!(
            "knowledge base hash {} does not match the bundle's {}",
            &actual[..12.min(actual.len())],
            &bundle.kb_sha256[..12.min(bundle.kb_sha256.len())]
        )));
    }
    let expected: Vec<&str> = FEATURE_NAMES.to_vec();
    if bundle.ensemble.feature_schema != expected {
        return Err(CliError::Schema(
            "bundle feature schema does not match this featurizer".into(),
        ));
    }
    Ok(())
}
