//! Evaluation: confusion-matrix metrics (ACC, P, R, F1, MCC), the API
//! coverage score for simulated traffic, stratified dataset splitting, and
//! report emission (markdown + flat JSON, optional score histogram).
//!
//! Conventions frozen here: any metric whose denominator is zero is defined
//! as 0, and the coefficient of variation in the coverage score is clamped
//! below at 1e-6 because perfectly uniform usage would otherwise divide by
//! zero.

use crate::fsutil::atomic_write;
use crate::miner::{kb_templates, match_template, KnowledgeItem};
use crate::traffic::TrafficSequence;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {predictions} predictions vs {labels} labels")]
    Shape { predictions: usize, labels: usize },
    #[error("cannot evaluate an empty prediction set")]
    EmptyInput,
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("stratified split impossible: {class} class has {count} member(s), need at least 2")]
    Stratify { class: &'static str, count: usize },
    #[error("report io failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("metrics file malformed: {0}")]
    Malformed(String),
}

/// Counts with violation as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(predictions: &[bool], labels: &[bool]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::Shape { predictions: predictions.len(), labels: labels.len() });
    }
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut cm = ConfusionMatrix { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cov_api: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub llm_cost_usd: Option<f64>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// ACC, P, R, F1 and MCC from the four confusion counts; zero denominators
/// yield 0 by convention.
pub fn metrics(cm: &ConfusionMatrix) -> MetricReport {
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let acc = ratio(tp + tn, tp + fp + tn + fn_);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    let mcc_den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    let mcc = ratio(tp * tn - fp * fn_, mcc_den);
    MetricReport {
        acc,
        precision,
        recall,
        f1,
        mcc,
        cov_api: None,
        wall_ms: None,
        llm_cost_usd: None,
        confusion: Some(*cm),
    }
}

/// Cov = (|A_used|/|A|) / max(CV, 1e-6) over per-endpoint invocation counts
/// `f`, which must include zeros for unused endpoints. Returns 0 when there
/// are no endpoints or no invocations at all.
pub fn coverage_from_counts(f: &[f64]) -> f64 {
    if f.is_empty() {
        return 0.0;
    }
    let total: f64 = f.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let n = f.len() as f64;
    let used = f.iter().filter(|&&c| c > 0.0).count() as f64;
    let mean = total / n;
    let var = f.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    let cv = var.sqrt() / mean;
    (used / n) / cv.max(1e-6)
}

/// Counts template invocations over all traffic (f_a = 0 included) and
/// applies [`coverage_from_counts`].
pub fn api_coverage(traffic: &[TrafficSequence], kb: &[KnowledgeItem]) -> f64 {
    let templates = kb_templates(kb);
    let mut counts = vec![0.0f64; templates.len()];
    let index: std::collections::HashMap<u64, usize> =
        templates.iter().enumerate().map(|(i, t)| (t.template_id, i)).collect();
    for seq in traffic {
        for record in &seq.records {
            if let Some(id) = match_template(record, &templates) {
                counts[index[&id]] += 1.0;
            }
        }
    }
    coverage_from_counts(&counts)
}

/// Seeded stratified split over boolean labels; returns (train, test) index
/// sets, each class split `train_frac` : rest with at least one member on
/// each side.
pub fn split_indices(
    labels: &[bool],
    train_frac: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(EvalError::InvalidFraction(train_frac));
    }
    let neg: Vec<usize> = labels.iter().enumerate().filter(|(_, &l)| !l).map(|(i, _)| i).collect();
    let pos: Vec<usize> = labels.iter().enumerate().filter(|(_, &l)| l).map(|(i, _)| i).collect();
    if neg.len() < 2 {
        return Err(EvalError::Stratify { class: "negative", count: neg.len() });
    }
    if pos.len() < 2 {
        return Err(EvalError::Stratify { class: "positive", count: pos.len() });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [neg, pos] {
        let mut idx = class;
        idx.shuffle(&mut rng);
        let n = idx.len();
        let k = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

/// Renders the human-readable report: the metric table plus optional
/// confusion, coverage, and cost lines.
pub fn report_to_markdown(report: &MetricReport) -> String {
    let mut out = String::from("# Evaluation Report\n\n");
    out.push_str("| ACC | P | R | F1 | MCC |\n");
    out.push_str("|----:|----:|----:|----:|----:|\n");
    out.push_str(&format!(
        "| {} | {} | {} | {} | {} |\n",
        fmt4(report.acc),
        fmt4(report.precision),
        fmt4(report.recall),
        fmt4(report.f1),
        fmt4(report.mcc)
    ));
    if let Some(cm) = &report.confusion {
        out.push_str(&format!(
            "\n- Confusion matrix: tp={}, fp={}, tn={}, fn={}\n",
            cm.tp, cm.fp, cm.tn, cm.fn_
        ));
    }
    if let Some(cov) = report.cov_api {
        out.push_str(&format!("- Cov_API: {}\n", fmt4(cov)));
    }
    if let Some(ms) = report.wall_ms {
        out.push_str(&format!("- Wall time: {ms} ms\n"));
    }
    if let Some(cost) = report.llm_cost_usd {
        out.push_str(&format!("- LLM cost: ${cost:.4}\n"));
    }
    out
}

/// Flat key→number JSON document; optional fields are omitted, never
/// zero-filled.
pub fn report_to_json(report: &MetricReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report is serializable");
    s.push('\n');
    s
}

pub fn report_from_json(text: &str) -> Result<MetricReport, EvalError> {
    serde_json::from_str(text).map_err(|e| EvalError::Malformed(e.to_string()))
}

/// Writes `report.md` and `metrics.json` under `dir` (atomically), returning
/// the two paths.
pub fn emit_report(
    report: &MetricReport,
    dir: &Path,
) -> Result<(std::path::PathBuf, std::path::PathBuf), EvalError> {
    let md_path = dir.join("report.md");
    let json_path = dir.join("metrics.json");
    atomic_write(&md_path, report_to_markdown(report).as_bytes())?;
    atomic_write(&json_path, report_to_json(report).as_bytes())?;
    Ok((md_path, json_path))
}

/// Renders a per-class histogram of predicted scores as a standalone SVG:
/// 20 bins over [0, 1], benign on the left half of each bin slot, violation
/// on the right.
pub fn render_histogram_svg(scores: &[f64], labels: &[bool]) -> String {
    const BINS: usize = 20;
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const MARGIN: f64 = 40.0;
    let mut benign = [0u64; BINS];
    let mut violation = [0u64; BINS];
    for (&s, &l) in scores.iter().zip(labels) {
        let bin = ((s.clamp(0.0, 1.0) * BINS as f64) as usize).min(BINS - 1);
        if l {
            violation[bin] += 1;
        } else {
            benign[bin] += 1;
        }
    }
    let max = benign.iter().chain(violation.iter()).copied().max().unwrap_or(0).max(1) as f64;
    let plot_w = W - 2.0 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    let slot = plot_w / BINS as f64;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (series, color, offset) in
        [(&benign, "#4878a8", 0.0), (&violation, "#c44e52", slot * 0.45)]
    {
        for (i, &count) in series.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let bar_h = plot_h * count as f64 / max;
            let x = MARGIN + i as f64 * slot + offset;
            let y = H - MARGIN - bar_h;
            svg.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{bar_h:.1}\" \
                 fill=\"{color}\" fill-opacity=\"0.8\"/>\n",
                slot * 0.45
            ));
        }
    }
    svg.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MARGIN,
        W - MARGIN,
        H - MARGIN
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">predicted score</text>\n",
        W / 2.0,
        H - 8.0
    ));
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"12\" fill=\"#4878a8\">benign</text>\n",
        MARGIN - 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#c44e52\">violation</text>\n",
        MARGIN + 60.0,
        MARGIN - 16.0
    ));
    svg.push_str("</svg>\n");
    svg
}

pub fn emit_histogram(scores: &[f64], labels: &[bool], path: &Path) -> Result<(), EvalError> {
    atomic_write(path, render_histogram_svg(scores, labels).as_bytes())?;
    Ok(())
}
