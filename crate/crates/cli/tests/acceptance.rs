//! Release acceptance suite.
//!
//! One test per acceptance criterion. Each prints a single
//! `[PASS]`/`[FAIL]` line naming the criterion (visible with
//! `cargo test --test acceptance -- --nocapture`, and always on failure) and
//! then asserts, so `cargo test` reflects the overall verdict.
//!
//! Every numeric check here is against an oracle derived independently in
//! this file (histogram counters, closed-form hand values, finite
//! differences, brute-force enumerations), never against the library's own
//! arithmetic.

use bacalarm_core::eval::{confusion, coverage_from_counts, metrics, ConfusionMatrix};
use bacalarm_core::features::{entropy_features, static_features, FEATURE_DIM};
use bacalarm_core::miner::{kb_from_json, match_template, mine_templates, ApiTemplate, PathToken};
use bacalarm_core::seqmodel::{
    deviation_score, positional_weights, tokenize, Backend, EventVocabulary, NextEventModel,
    SeqTrainConfig,
};
use bacalarm_core::traffic::{
    read_corpus, serialize_record, Method, SequenceRole, TrafficRecord, TrafficSequence,
};
use bacalarm_sim::filter::MALICIOUS_ACCEPTED;
use bacalarm_sim::mock::{LlmScript, MockLlm, MockTarget, TargetMode};
use bacalarm_sim::plan::{IdentitySlot, PlanStep, PlannedSequence};
use bacalarm_sim::{filter_hallucinations, Role};
use indexmap::IndexMap;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

/// Prints the criterion's verdict line, then fails the test if `ok` is
/// false. All criterion-level checks funnel through here so the line is
/// printed on both outcomes.
fn verdict(criterion: &str, ok: bool, detail: String) {
    println!("[{}] {criterion}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{criterion}: {detail}");
}

fn bin(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_bacalarm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    (
        out.status.code().expect("no signal"),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

// ---------------------------------------------------------------- fixtures

/// An endpoint shape: literal segments with `None` marking an ID slot.
#[derive(Clone)]
struct Shape {
    method: Method,
    segments: Vec<Option<&'static str>>,
}

impl Shape {
    fn pattern(&self) -> (Method, Vec<String>) {
        (self.method, self.segments.iter().map(|s| s.unwrap_or("<*>").to_string()).collect())
    }

    fn sample(&self, rng: &mut impl Rng) -> String {
        let mut p = String::new();
        for seg in &self.segments {
            p.push('/');
            match seg {
                Some(lit) => p.push_str(lit),
                None => p.push_str(&rng.gen_range(1u64..100_000).to_string()),
            }
        }
        p
    }
}

/// Twenty structurally distinct endpoint shapes (no two can merge during
/// mining: same-method same-length pairs always differ in a routing token).
fn twenty_shapes() -> Vec<Shape> {
    use Method::*;
    let s = |method, segments: Vec<Option<&'static str>>| Shape { method, segments };
    vec![
        s(GET, vec![Some("api"), Some("users"), None]),
        s(GET, vec![Some("api"), Some("users"), None, Some("profile")]),
        s(POST, vec![Some("api"), Some("users")]),
        s(GET, vec![Some("api"), Some("notes")]),
        s(GET, vec![Some("api"), Some("notes"), None]),
        s(POST, vec![Some("api"), Some("notes")]),
        s(PUT, vec![Some("api"), Some("notes"), None]),
        s(DELETE, vec![Some("api"), Some("notes"), None]),
        s(GET, vec![Some("api"), Some("orders"), None, Some("items")]),
        s(GET, vec![Some("api"), Some("orders")]),
        s(POST, vec![Some("api"), Some("orders"), None, Some("cancel")]),
        s(GET, vec![Some("api"), Some("products"), None]),
        s(GET, vec![Some("api"), Some("products")]),
        s(GET, vec![Some("api"), Some("cart")]),
        s(POST, vec![Some("api"), Some("cart"), Some("items")]),
        s(DELETE, vec![Some("api"), Some("cart"), Some("items"), None]),
        s(GET, vec![Some("api"), Some("profile")]),
        s(PUT, vec![Some("api"), Some("profile")]),
        s(GET, vec![Some("api"), Some("health")]),
        s(POST, vec![Some("api"), Some("auth"), Some("login")]),
    ]
}

fn log_from_shapes(shapes: &[Shape], lines: usize, seed: u64) -> String {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = String::new();
    for i in 0..lines {
        let shape = &shapes[i % shapes.len()];
        let record = TrafficRecord {
            timestamp: 1_700_000_000_000 + i as i64 * 137,
            session_id: format!("s{}", i % 23),
            identity: format!("u{}", i % 7),
            method: shape.method,
            path: shape.sample(&mut rng),
            query_params: IndexMap::new(),
            status: 200,
            template_id: None,
        };
        out.push_str(&serialize_record(&record));
        out.push('\n');
    }
    out
}

const WORDS: [&str; 12] = [
    "users", "orders", "items", "posts", "comments", "files", "profile", "settings", "teams",
    "tasks", "labels", "events",
];
const METHODS: [Method; 5] =
    [Method::GET, Method::POST, Method::PUT, Method::DELETE, Method::PATCH];
const RANDOM_STATUSES: [u16; 6] = [200, 401, 403, 404, 500, 302];

fn rec_with(ts: i64, status: u16, path: &str) -> TrafficRecord {
    TrafficRecord {
        timestamp: ts,
        session_id: "s".into(),
        identity: "u".into(),
        method: Method::GET,
        path: path.into(),
        query_params: IndexMap::new(),
        status,
        template_id: None,
    }
}

/// A random sequence with no particular structure, for the feature oracles.
fn random_sequence(rng: &mut ChaCha12Rng, id: usize) -> TrafficSequence {
    let t = rng.gen_range(1..=20);
    let mut records = Vec::with_capacity(t);
    let mut last_path: Option<String> = None;
    for i in 0..t {
        let path = match &last_path {
            Some(prev) if rng.gen_bool(0.3) => prev.clone(),
            _ => {
                let depth = rng.gen_range(1..=4);
                let mut p = String::new();
                for _ in 0..depth {
                    p.push('/');
                    p.push_str(WORDS.choose(rng).unwrap());
                }
                p
            }
        };
        last_path = Some(path.clone());
        let mut query_params = IndexMap::new();
        for key in ["page", "sort", "q"] {
            if rng.gen_bool(0.3) {
                query_params.insert(key.to_string(), rng.gen_range(0u32..9).to_string());
            }
        }
        records.push(TrafficRecord {
            timestamp: i as i64,
            session_id: "s".into(),
            identity: "u".into(),
            method: *METHODS.choose(rng).unwrap(),
            path,
            query_params,
            status: *RANDOM_STATUSES.choose(rng).unwrap(),
            template_id: None,
        });
    }
    TrafficSequence::new(format!("r{id}"), records, SequenceRole::Unlabeled, None, None).unwrap()
}

/// Histogram Shannon entropy in bits, the oracle form.
fn oracle_entropy<T: Ord>(values: &[T]) -> f64 {
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let n = values.len() as f64;
    counts.values().map(|&c| c as f64 / n).map(|p| -p * p.log2()).sum()
}

fn oracle_transition_entropy<T: Ord>(values: &[T]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let pairs: Vec<(&T, &T)> = values.windows(2).map(|w| (&w[0], &w[1])).collect();
    oracle_entropy(&pairs)
}

// --------------------------------------------------------------- criteria

#[test]
fn criterion_01_miner_recovery() {
    const NAME: &str = "criterion 01 miner recovery";
    let dir = tempfile::tempdir().unwrap();
    let shapes = twenty_shapes();
    std::fs::write(dir.path().join("access.log"), log_from_shapes(&shapes, 2000, 4242)).unwrap();

    let start = Instant::now();
    let (code, _, stderr) = bin(dir.path(), &["mine", "--log", "access.log", "--out", "kb.json"]);
    let elapsed = start.elapsed();
    if code != 0 {
        return verdict(NAME, false, format!("mine exited {code}: {stderr}"));
    }

    let kb = kb_from_json(&std::fs::read_to_string(dir.path().join("kb.json")).unwrap()).unwrap();
    let mined: BTreeSet<(Method, Vec<String>)> = kb
        .iter()
        .map(|i| {
            (
                i.template.method,
                i.template.token_pattern.iter().map(|t| t.render().to_string()).collect(),
            )
        })
        .collect();
    let truth: BTreeSet<(Method, Vec<String>)> = shapes.iter().map(|s| s.pattern()).collect();
    let hits = mined.intersection(&truth).count() as f64;
    let precision = hits / mined.len() as f64;
    let recall = hits / truth.len() as f64;

    verdict(
        NAME,
        precision == 1.0 && recall == 1.0 && mined.len() == 20 && elapsed.as_secs_f64() < 5.0,
        format!(
            "2000 lines / 20 endpoints: precision {precision:.3}, recall {recall:.3}, \
             {} templates in {:.2}s (budget 5s)",
            mined.len(),
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_02_miner_fixpoint_and_coverage() {
    const NAME: &str = "criterion 02 miner fixpoint and coverage";
    let mut failures: Vec<String> = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(1_000 + seed);
        let n_shapes = rng.gen_range(4..=12);
        let mut shapes: Vec<Shape> = Vec::new();
        let mut seen = HashSet::new();
        while shapes.len() < n_shapes {
            let method = *METHODS.choose(&mut rng).unwrap();
            let depth = rng.gen_range(1..=3);
            let mut segments: Vec<Option<&'static str>> = vec![Some("api")];
            for level in 0..depth {
                if level > 0 && segments.last().unwrap().is_some() && rng.gen_bool(0.4) {
                    segments.push(None);
                } else {
                    segments.push(Some(WORDS.choose(&mut rng).unwrap()));
                }
            }
            let candidate = Shape { method, segments };
            let (m, pat) = candidate.pattern();
            let prefix: Vec<String> = pat.iter().take(2).cloned().collect();
            if seen.insert((m, pat.len(), prefix)) {
                shapes.push(candidate);
            }
        }
        let lines = rng.gen_range(80..=300);
        let mut records = Vec::with_capacity(lines);
        for i in 0..lines {
            let shape = shapes.choose(&mut rng).unwrap();
            records.push(TrafficRecord {
                timestamp: i as i64,
                session_id: "s".into(),
                identity: "u".into(),
                method: shape.method,
                path: shape.sample(&mut rng),
                query_params: IndexMap::new(),
                status: 200,
                template_id: None,
            });
        }

        let templates = mine_templates(&records, 0.5, 4).unwrap();

        // Coverage: every record matches exactly one mined template.
        for r in &records {
            let n = templates
                .iter()
                .filter(|t| match_template(r, std::slice::from_ref(t)).is_some())
                .count();
            if n != 1 {
                failures.push(format!("seed {seed}: {} matched {n} templates", r.path));
            }
        }
        let support: u64 = templates.iter().map(|t| t.support).sum();
        if support != records.len() as u64 {
            failures.push(format!("seed {seed}: support {support} != {} records", records.len()));
        }

        // Fixpoint: re-mining the rendered patterns reproduces them.
        let rendered: Vec<TrafficRecord> = templates
            .iter()
            .map(|t| {
                let mut r = rec_with(0, 200, &t.render_path());
                r.method = t.method;
                r
            })
            .collect();
        let remined = mine_templates(&rendered, 0.5, 4).unwrap();
        let as_set = |ts: &[ApiTemplate]| -> BTreeSet<(Method, Vec<PathToken>)> {
            ts.iter().map(|t| (t.method, t.token_pattern.clone())).collect()
        };
        if as_set(&remined) != as_set(&templates) {
            failures.push(format!("seed {seed}: not a fixpoint"));
        }

        // Determinism.
        if mine_templates(&records, 0.5, 4).unwrap() != templates {
            failures.push(format!("seed {seed}: non-deterministic"));
        }
    }
    verdict(
        NAME,
        failures.is_empty(),
        if failures.is_empty() {
            "coverage, support conservation, fixpoint, determinism on 100 corpora".to_string()
        } else {
            format!("{} violations, first: {}", failures.len(), failures[0])
        },
    );
}

#[test]
fn criterion_03_entropy_oracle() {
    const NAME: &str = "criterion 03 entropy oracle";
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let mut max_delta = 0.0f64;
    for i in 0..1000 {
        let seq = random_sequence(&mut rng, i);
        let got = entropy_features(&seq);
        let methods: Vec<&str> = seq.records.iter().map(|r| r.method.as_str()).collect();
        let statuses: Vec<u16> = seq.records.iter().map(|r| r.status).collect();
        let paths: Vec<&str> = seq.records.iter().map(|r| r.path.as_str()).collect();
        let flag = |code: u16| -> Vec<bool> { statuses.iter().map(|&s| s == code).collect() };
        let other: Vec<bool> = statuses.iter().map(|&s| ![200, 403, 401].contains(&s)).collect();
        let expect = [
            oracle_entropy(&methods),
            oracle_transition_entropy(&methods),
            oracle_entropy(&flag(200)),
            oracle_entropy(&flag(403)),
            oracle_entropy(&flag(401)),
            oracle_entropy(&other),
            oracle_entropy(&statuses),
            oracle_transition_entropy(&statuses),
            oracle_entropy(&paths),
            oracle_transition_entropy(&paths),
        ];
        let gotv = [
            got.h_method,
            got.h_trans_method,
            got.h_status_200,
            got.h_status_403,
            got.h_status_401,
            got.h_status_other,
            got.h_sum_status,
            got.h_trans_status,
            got.h_path,
            got.h_trans_path,
        ];
        for (g, e) in gotv.iter().zip(&expect) {
            max_delta = max_delta.max((g - e).abs());
        }
    }

    // Hand cases: a fair two-status split is exactly one bit; the A,B,A,B
    // transition stream has counts {A->B: 2, B->A: 1}.
    let seq = TrafficSequence::new(
        "hand",
        vec![rec_with(0, 200, "/x"), rec_with(1, 403, "/x")],
        SequenceRole::Unlabeled,
        None,
        None,
    )
    .unwrap();
    let one_bit = entropy_features(&seq).h_sum_status;
    let h_abab = bacalarm_core::features::transition_entropy(&["A", "B", "A", "B"]);
    let expect_abab = -(2.0 / 3.0) * (2.0f64 / 3.0).log2() - (1.0 / 3.0) * (1.0f64 / 3.0).log2();

    verdict(
        NAME,
        max_delta < 1e-9
            && (one_bit - 1.0).abs() < 1e-12
            && (h_abab - expect_abab).abs() < 1e-12
            && (h_abab - 0.9183).abs() < 1e-4,
        format!(
            "1000 sequences max |delta| {max_delta:.2e}; [200,403] = {one_bit} bit; \
             ABAB transitions = {h_abab:.4} bits"
        ),
    );
}

#[test]
fn criterion_04_static_feature_oracle() {
    const NAME: &str = "criterion 04 static feature oracle";
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let mut max_delta = 0.0f64;
    for i in 0..1000 {
        let seq = random_sequence(&mut rng, i);
        let got = static_features(&seq);
        let t = seq.records.len() as f64;
        let paths: Vec<&str> = seq.records.iter().map(|r| r.path.as_str()).collect();
        let unique = paths.iter().collect::<BTreeSet<_>>().len() as f64;
        let keys: BTreeSet<&String> =
            seq.records.iter().flat_map(|r| r.query_params.keys()).collect();
        let param_counts: Vec<f64> =
            seq.records.iter().map(|r| r.query_params.len() as f64).collect();
        let total_params: f64 = param_counts.iter().sum();
        let repeats = (1..paths.len()).filter(|&i| paths[i] == paths[i - 1]).count() as f64;
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let pstd = |xs: &[f64]| {
            let m = mean(xs);
            (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
        };
        let lengths: Vec<f64> = paths.iter().map(|p| p.chars().count() as f64).collect();
        let depths: Vec<f64> = paths.iter().map(|p| p.matches('/').count() as f64).collect();
        let distinct_statuses =
            seq.records.iter().map(|r| r.status).collect::<BTreeSet<_>>().len() as f64;
        let expect = [
            unique,
            t,
            keys.len() as f64,
            total_params,
            repeats,
            mean(&lengths),
            pstd(&lengths),
            total_params / t,
            pstd(&param_counts),
            mean(&depths),
            pstd(&depths),
            unique / t,
            distinct_statuses,
        ];
        let gotv = [
            got.unique_paths_count,
            got.total_paths_count,
            got.unique_params_count,
            got.total_params_count,
            got.consecutive_repeats,
            got.avg_path_length,
            got.std_path_length,
            got.avg_param_count,
            got.std_param_count,
            got.avg_path_depth,
            got.std_path_depth,
            got.uniqueness_ratio,
            got.status_code_diversity,
        ];
        for (g, e) in gotv.iter().zip(&expect) {
            max_delta = max_delta.max((g - e).abs());
        }
    }

    // Worked example: paths /a, /a, /b/c/d.
    let seq = TrafficSequence::new(
        "worked",
        vec![rec_with(0, 200, "/a"), rec_with(1, 200, "/a"), rec_with(2, 200, "/b/c/d")],
        SequenceRole::Unlabeled,
        None,
        None,
    )
    .unwrap();
    let s = static_features(&seq);
    let worked = s.unique_paths_count == 2.0
        && s.consecutive_repeats == 1.0
        && (s.uniqueness_ratio - 2.0 / 3.0).abs() < 1e-15
        && (s.avg_path_depth - 5.0 / 3.0).abs() < 1e-15;

    verdict(
        NAME,
        max_delta < 1e-9 && worked,
        format!(
            "1000 sequences max |delta| {max_delta:.2e}; worked example \
             (unique 2, repeats 1, ratio 2/3, avg depth 5/3) reproduced"
        ),
    );
}

#[test]
fn criterion_05_deviation_score() {
    const NAME: &str = "criterion 05 deviation score";

    // Constant-score invariance.
    let mut constant_ok = true;
    for t in [1usize, 2, 5, 37, 1000] {
        let s = deviation_score(&vec![0.8125; t]).unwrap();
        constant_ok &= (s - 0.8125).abs() < 1e-12;
    }

    // T = 2 hand value: S = e^1 / (e^{1/2} + e^1) for scores [0, 1].
    let s2 = deviation_score(&[0.0, 1.0]).unwrap();
    let expect2 = 1.0f64.exp() / (0.5f64.exp() + 1.0f64.exp());
    let t2_ok = (s2 - expect2).abs() < 1e-9 && (s2 - 0.6225).abs() < 1e-4;

    // Ngram backend against an independent counting oracle.
    let shapes = twenty_shapes();
    let mut rng = ChaCha12Rng::seed_from_u64(13);
    let mut corpus: Vec<TrafficSequence> = Vec::new();
    for i in 0..40 {
        let t = rng.gen_range(2..=8);
        let records: Vec<TrafficRecord> = (0..t)
            .map(|j| {
                let shape = shapes.choose(&mut rng).unwrap();
                let mut r = rec_with(j as i64, 200, &shape.sample(&mut rng));
                r.method = shape.method;
                r.session_id = format!("s{i}");
                r
            })
            .collect();
        corpus.push(
            TrafficSequence::new(format!("c{i}"), records, SequenceRole::Benign, Some(false), None)
                .unwrap(),
        );
    }
    let log = log_from_shapes(&shapes, 600, 17);
    let records =
        bacalarm_core::traffic::read_records(std::io::Cursor::new(log.into_bytes())).unwrap();
    let templates = mine_templates(&records, 0.5, 4).unwrap();
    let delta = 0.1;
    let cfg = SeqTrainConfig { backend: Backend::Ngram, delta, ..SeqTrainConfig::default() };
    let model = NextEventModel::train(&corpus, &templates, &cfg).unwrap();

    // Oracle: recount unigram/bigram/context tables over the tokenized
    // streams and apply the closed forms
    //   P_uni(w) = (c(w) + d) / (N + d|V|)
    //   P(w | v) = (c(v,w) + d|V| P_uni(w)) / (c(v) + d|V|).
    let vocab = EventVocabulary::build(&templates);
    let streams: Vec<Vec<u32>> = corpus.iter().map(|s| tokenize(s, &templates, &vocab)).collect();
    let mut uni: BTreeMap<u32, u64> = BTreeMap::new();
    let mut big: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut ctx: BTreeMap<u32, u64> = BTreeMap::new();
    let mut total = 0u64;
    for stream in &streams {
        for w in stream.windows(2) {
            *uni.entry(w[1]).or_default() += 1;
            *big.entry((w[0], w[1])).or_default() += 1;
            *ctx.entry(w[0]).or_default() += 1;
            total += 1;
        }
    }
    let v = vocab.size() as f64;
    let p_uni =
        |w: u32| (uni.get(&w).copied().unwrap_or(0) as f64 + delta) / (total as f64 + delta * v);
    let p_cond = |c: u32, w: u32| {
        let dv = delta * v;
        (big.get(&(c, w)).copied().unwrap_or(0) as f64 + dv * p_uni(w))
            / (ctx.get(&c).copied().unwrap_or(0) as f64 + dv)
    };
    let mut max_nll_delta = 0.0f64;
    for (seq, stream) in corpus.iter().zip(&streams) {
        let scores = model.per_event_scores(seq, &templates);
        for (t, s) in scores.iter().enumerate() {
            let oracle = -p_cond(stream[t], stream[t + 1]).ln();
            max_nll_delta = max_nll_delta.max((s - oracle).abs());
        }
    }

    // Weight monotonicity up to T = 10,000.
    let mut monotone = true;
    for t in [2usize, 3, 100, 9999, 10_000] {
        let w = positional_weights(t);
        monotone &= w.windows(2).all(|p| p[1] > p[0]);
    }

    verdict(
        NAME,
        constant_ok && t2_ok && max_nll_delta < 1e-12 && monotone,
        format!(
            "constant invariance; T=2 = {s2:.4}; ngram -log P max |delta| \
             {max_nll_delta:.2e}; weights strictly increase to T=10000"
        ),
    );
}

#[test]
fn criterion_06_gated_fusion() {
    const NAME: &str = "criterion 06 gated fusion";
    use bacalarm_core::detector::{fuse, GateNetwork, NeuralExpert};

    // Arithmetic case: 0.3*0.9 + 0.7*0.1 = 0.34.
    let arithmetic = (fuse([0.3, 0.7], 0.9, 0.1) - 0.34).abs() < 1e-12;

    // Simplex + convexity over 10,000 random inputs across ten random
    // gate initializations.
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let mut simplex_ok = true;
    let mut convex_ok = true;
    for trial in 0..10u64 {
        let gate = GateNetwork::new(6, 8, trial);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let g = gate.weights(&x);
            simplex_ok &= g[0] >= 0.0 && g[1] >= 0.0 && (g[0] + g[1] - 1.0).abs() < 1e-12;
            let f_cb: f64 = rng.gen();
            let f_mlp: f64 = rng.gen();
            let fused = fuse(g, f_cb, f_mlp);
            let (lo, hi) = (f_cb.min(f_mlp), f_cb.max(f_mlp));
            convex_ok &= fused >= lo - 1e-12 && fused <= hi + 1e-12;
        }
    }

    // Neural-expert gradients vs central finite differences, every
    // parameter.
    let mut grads_ok = true;
    let mut worst_rel = 0.0f64;
    let mut net = NeuralExpert::new(4, 6, 5);
    let xs: Vec<Vec<f64>> =
        (0..16).map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let x_refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let y: Vec<bool> = (0..16).map(|i| i % 3 == 0).collect();
    let (_, grads) = net.loss_and_grads(&x_refs, &y);
    let h = 1e-6;
    for p in 0..net.params.len() {
        let orig = net.params[p];
        net.params[p] = orig + h;
        let up = net.loss(&x_refs, &y);
        net.params[p] = orig - h;
        let down = net.loss(&x_refs, &y);
        net.params[p] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grads[p]).abs() / fd.abs().max(grads[p].abs()).max(1e-8);
        worst_rel = worst_rel.max(rel);
        grads_ok &= rel < 1e-3;
    }

    verdict(
        NAME,
        arithmetic && simplex_ok && convex_ok && grads_ok,
        format!(
            "0.34 case exact; simplex/convexity on 10000 inputs; gradcheck \
             worst rel err {worst_rel:.2e}"
        ),
    );
}

#[test]
fn criterion_07_metrics_exhaustive() {
    const NAME: &str = "criterion 07 metrics exhaustive";
    let mut max_delta = 0.0f64;
    let mut failures: Vec<String> = Vec::new();
    for tp in 0..=6u64 {
        for fp in 0..=6u64 {
            for tn in 0..=6u64 {
                for fn_ in 0..=6u64 {
                    let cm = ConfusionMatrix { tp, fp, tn, fn_ };
                    let got = metrics(&cm);

                    // Brute force from raw prediction/label vectors.
                    let mut preds = Vec::new();
                    let mut labels = Vec::new();
                    for (p, l, k) in [
                        (true, true, tp),
                        (true, false, fp),
                        (false, false, tn),
                        (false, true, fn_),
                    ] {
                        for _ in 0..k {
                            preds.push(p);
                            labels.push(l);
                        }
                    }
                    if !preds.is_empty() && confusion(&preds, &labels).unwrap() != cm {
                        failures.push(format!("confusion mismatch at {cm:?}"));
                    }
                    let n = (tp + fp + tn + fn_) as f64;
                    let frac = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
                    let acc = frac((tp + tn) as f64, n);
                    let p = frac(tp as f64, (tp + fp) as f64);
                    let r = frac(tp as f64, (tp + fn_) as f64);
                    let f1 = frac(2.0 * p * r, p + r);
                    let mcc_den = ((tp + fp) as f64
                        * (tp + fn_) as f64
                        * (tn + fp) as f64
                        * (tn + fn_) as f64)
                        .sqrt();
                    let mcc = frac((tp * tn) as f64 - (fp * fn_) as f64, mcc_den);
                    for (g, e) in [
                        (got.acc, acc),
                        (got.precision, p),
                        (got.recall, r),
                        (got.f1, f1),
                        (got.mcc, mcc),
                    ] {
                        max_delta = max_delta.max((g - e).abs());
                    }

                    // Class swap transposes the matrix; MCC must not move.
                    let swapped = metrics(&ConfusionMatrix { tp: tn, fp: fn_, tn: tp, fn_: fp });
                    if (swapped.mcc - got.mcc).abs() >= 1e-12 {
                        failures.push(format!("MCC swap moved at {cm:?}"));
                    }
                }
            }
        }
    }
    let worked = metrics(&ConfusionMatrix { tp: 3, fp: 1, tn: 5, fn_: 1 });
    let worked_ok = (worked.mcc - 14.0 / 24.0).abs() < 1e-12;
    verdict(
        NAME,
        max_delta < 1e-12 && failures.is_empty() && worked_ok,
        format!(
            "2401 matrices max |delta| {max_delta:.2e}; MCC swap invariant; \
             worked case = 14/24 ({} violations)",
            failures.len()
        ),
    );
}

#[test]
fn criterion_08_api_coverage() {
    const NAME: &str = "criterion 08 api coverage";
    let hand = coverage_from_counts(&[1.0, 1.0, 1.0, 3.0]);
    let hand_ok = (hand - 3.0f64.sqrt()).abs() < 1e-6 && (hand - 1.7321).abs() < 1e-4;

    let mut rng = ChaCha12Rng::seed_from_u64(29);
    let mut scale_ok = true;
    let mut vectors = 0;
    while vectors < 200 {
        let n = rng.gen_range(2..=30);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0u32..20) as f64).collect();
        if f.iter().sum::<f64>() == 0.0 {
            continue;
        }
        let doubled: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
        scale_ok &= (coverage_from_counts(&f) - coverage_from_counts(&doubled)).abs() < 1e-12;
        vectors += 1;
    }
    verdict(
        NAME,
        hand_ok && scale_ok,
        format!("f=[1,1,1,3] -> {hand:.6} (sqrt 3); scale invariance f -> 2f on 200 vectors"),
    );
}

#[test]
fn criterion_09_filter_truth_table() {
    const NAME: &str = "criterion 09 filter truth table";
    const SET: [u16; 7] = [0, 200, 400, 401, 403, 404, 500];

    let plan_of = |role: Role, len: usize| PlannedSequence {
        role,
        behavior: "table".into(),
        steps: (0..len)
            .map(|i| PlanStep {
                method: Method::GET,
                path: format!("/api/notes/{i}"),
                intent: "check".into(),
                identity: IdentitySlot::Own,
            })
            .collect(),
    };
    let seq_of = |statuses: &[u16]| {
        TrafficSequence::new(
            "t",
            statuses
                .iter()
                .enumerate()
                .map(|(i, &st)| rec_with(i as i64, st, &format!("/api/notes/{i}")))
                .collect(),
            SequenceRole::Unlabeled,
            None,
            None,
        )
        .unwrap()
    };

    let mut failures: Vec<String> = Vec::new();
    let mut cases = 0;
    for role in [Role::Benign, Role::Malicious] {
        let mut tuples: Vec<Vec<u16>> = SET.iter().map(|&s| vec![s]).collect();
        for &a in &SET {
            for &b in &SET {
                tuples.push(vec![a, b]);
                for &c in &SET {
                    tuples.push(vec![a, b, c]);
                }
            }
        }
        for statuses in tuples {
            let plan = plan_of(role, statuses.len());
            let kept = filter_hallucinations(&seq_of(&statuses), &plan).is_keep();
            let expect = match role {
                Role::Benign => statuses.iter().all(|&s| s == 200),
                Role::Malicious => statuses.iter().all(|&s| MALICIOUS_ACCEPTED.contains(&s)),
            };
            if kept != expect {
                failures.push(format!("{role:?} {statuses:?}: kept={kept}, expected {expect}"));
            }
            cases += 1;
        }
    }

    // Named rows of the table.
    for (role, status, keep) in [
        (Role::Benign, 200u16, true),
        (Role::Benign, 404, false),
        (Role::Malicious, 403, true),
        (Role::Malicious, 400, false),
    ] {
        let plan = plan_of(role, 1);
        if filter_hallucinations(&seq_of(&[status]), &plan).is_keep() != keep {
            failures.push(format!("named row {role:?}/{status} wrong"));
        }
    }

    // An intent contradiction discards even a perfect status stream.
    let plan = plan_of(Role::Benign, 2);
    let mut seq = seq_of(&[200, 200]);
    seq.records[1].path = "/api/other".into();
    if filter_hallucinations(&seq, &plan).is_keep() {
        failures.push("intent contradiction kept".into());
    }

    verdict(
        NAME,
        failures.is_empty(),
        if failures.is_empty() {
            format!("{cases} role x status tuples; named rows; intent contradiction discards")
        } else {
            format!("{} violations, first: {}", failures.len(), failures[0])
        },
    );
}

#[test]
fn criterion_10_end_to_end_offline() {
    const NAME: &str = "criterion 10 end-to-end offline";
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let shapes = twenty_shapes();
    std::fs::write(dir.path().join("access.log"), log_from_shapes(&shapes, 2000, 777)).unwrap();

    for (step, args) in [
        ("mine", vec!["mine", "--log", "access.log", "--out", "kb.json"]),
        (
            "simulate",
            vec![
                "simulate", "--offline", "--n", "500", "--seed", "97",
                "--kb", "kb.json", "--out", "corpus.log", "--report", "sim.json",
            ],
        ),
        (
            "train",
            vec![
                "train", "--seed", "5", "--corpus", "corpus.log", "--kb", "kb.json",
                "--out", "bundle",
            ],
        ),
        (
            "eval",
            vec![
                "eval", "--seed", "5", "--corpus", "corpus.log", "--kb", "kb.json",
                "--bundle", "bundle", "--out", "evaldir",
            ],
        ),
    ] {
        let (code, _, stderr) = bin(dir.path(), &args);
        if code != 0 {
            return verdict(NAME, false, format!("{step} exited {code}: {stderr}"));
        }
    }

    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("evaldir/metrics.json")).unwrap(),
    )
    .unwrap();
    let f1 = metrics["f1"].as_f64().unwrap();
    let mcc = metrics["mcc"].as_f64().unwrap();
    let elapsed = start.elapsed();
    verdict(
        NAME,
        f1 >= 0.90 && mcc >= 0.85 && elapsed.as_secs() < 600,
        format!(
            "simulate(500) -> train -> eval on held-out 20%: F1 {f1:.4} (>= 0.90), \
             MCC {mcc:.4} (>= 0.85), wall {:.1}s (< 600s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_11_mock_llm_robustness() {
    const NAME: &str = "criterion 11 mock llm robustness";
    let dir = tempfile::tempdir().unwrap();
    let shapes = twenty_shapes();
    std::fs::write(dir.path().join("access.log"), log_from_shapes(&shapes, 1000, 55)).unwrap();
    let (code, _, stderr) = bin(dir.path(), &["mine", "--log", "access.log", "--out", "kb.json"]);
    if code != 0 {
        return verdict(NAME, false, format!("mine exited {code}: {stderr}"));
    }

    let mut failures: Vec<String> = Vec::new();
    let mut summaries = Vec::new();
    for (name, script, expect_kept) in [
        ("valid", LlmScript::Valid, true),
        ("retry-then-valid", LlmScript::RetryThenValid, true),
        ("always-garbage", LlmScript::AlwaysGarbage, false),
    ] {
        let llm = MockLlm::spawn(script);
        // Cookie names match the CLI defaults, so the mock target's
        // ownership map lines up with the executor's identity slots.
        let target = MockTarget::spawn(TargetMode::Enforcing, "own-session", "foreign-session");
        let (code, _, stderr) = bin(
            dir.path(),
            &[
                "simulate", "--n", "12", "--seed", "1",
                "--kb", "kb.json", "--out", "c.log", "--report", "r.json",
                "--llm-url", llm.base_url(), "--target-url", target.base_url(),
            ],
        );
        if code != 0 {
            failures.push(format!("{name}: exited {code}: {stderr}"));
            continue;
        }

        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap())
                .unwrap();
        let kept = report["kept"].as_u64().unwrap();
        let conserved = report["attempts"].as_u64().unwrap()
            == kept
                + report["discarded_hallucination"].as_u64().unwrap()
                + report["discarded_parse"].as_u64().unwrap()
                + report["incomplete"].as_u64().unwrap();
        if !conserved {
            failures.push(format!("{name}: counters not conserved: {report}"));
        }
        if (kept > 0) != expect_kept {
            failures.push(format!("{name}: kept = {kept}"));
        }

        // Every kept sequence must satisfy the filter's status policy.
        let corpus =
            read_corpus(std::io::Cursor::new(std::fs::read(dir.path().join("c.log")).unwrap()))
                .unwrap();
        if corpus.len() as u64 != kept {
            failures.push(format!("{name}: corpus {} vs report kept {kept}", corpus.len()));
        }
        for seq in &corpus {
            let clean = match seq.role {
                SequenceRole::Benign => seq.records.iter().all(|r| r.status == 200),
                SequenceRole::Malicious => {
                    seq.records.iter().all(|r| MALICIOUS_ACCEPTED.contains(&r.status))
                }
                SequenceRole::Unlabeled => false,
            };
            if !clean {
                failures.push(format!("{name}: kept sequence {} dirty", seq.sequence_id));
            }
        }
        summaries.push(format!("{name} kept {kept}"));
    }
    verdict(
        NAME,
        failures.is_empty(),
        if failures.is_empty() {
            format!("no crash, counters conserved, kept corpora clean ({})", summaries.join(", "))
        } else {
            format!("{} problems, first: {}", failures.len(), failures[0])
        },
    );
}

#[test]
fn feature_dimensionality_guard() {
    // The criteria above assume the 24-column feature contract.
    assert_eq!(FEATURE_DIM, 24);
}
