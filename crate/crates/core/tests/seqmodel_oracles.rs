//! Count-level oracle for the ngram backend and a direct recomputation of
//! the positionally weighted deviation score, both on randomized corpora.

mod common;

use std::collections::HashMap;

use bacalarm_core::miner::mine_templates;
use bacalarm_core::seqmodel::{
    deviation_score, positional_weights, tokenize, Backend, EventVocabulary, NextEventModel,
    SeqTrainConfig,
};
use bacalarm_core::traffic::{SequenceRole, TrafficSequence};
use common::{corpus_from_endpoints, random_endpoints};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

/// Benign sequences over a random endpoint set, plus the mined templates.
fn benign_corpus(seed: u64) -> (Vec<TrafficSequence>, Vec<bacalarm_core::miner::ApiTemplate>) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=8);
    let endpoints = random_endpoints(&mut rng, n);
    let records = corpus_from_endpoints(&mut rng, &endpoints, 400);
    let templates = mine_templates(&records, 0.5, 4).unwrap();
    let sequences: Vec<TrafficSequence> = records
        .chunks(rng.gen_range(3..=9))
        .enumerate()
        .map(|(i, chunk)| {
            TrafficSequence::new(
                format!("b{i}"),
                chunk.to_vec(),
                SequenceRole::Benign,
                Some(false),
                Some(false),
            )
            .unwrap()
        })
        .collect();
    (sequences, templates)
}

/// Re-derives every conditional probability from raw pair counts and checks
/// the trained model's per-event scores against −ln of that closed form.
#[test]
fn ngram_scores_match_count_oracle() {
    for seed in 0..25u64 {
        let (sequences, templates) = benign_corpus(seed);
        let config = SeqTrainConfig { backend: Backend::Ngram, delta: 0.1, ..Default::default() };
        let model = NextEventModel::train(&sequences, &templates, &config).unwrap();

        let vocab = EventVocabulary::build(&templates);
        let vsize = vocab.size() as f64;
        let streams: Vec<Vec<u32>> =
            sequences.iter().map(|s| tokenize(s, &templates, &vocab)).collect();

        // Independent counting pass.
        let mut unigram: HashMap<u32, f64> = HashMap::new();
        let mut bigram: HashMap<(u32, u32), f64> = HashMap::new();
        let mut context: HashMap<u32, f64> = HashMap::new();
        let mut total = 0.0;
        for stream in &streams {
            for i in 1..stream.len() {
                *unigram.entry(stream[i]).or_default() += 1.0;
                *bigram.entry((stream[i - 1], stream[i])).or_default() += 1.0;
                *context.entry(stream[i - 1]).or_default() += 1.0;
                total += 1.0;
            }
        }
        let delta = 0.1;
        let p_uni = |w: u32| (unigram.get(&w).unwrap_or(&0.0) + delta) / (total + delta * vsize);
        let p_cond = |v: u32, w: u32| {
            (bigram.get(&(v, w)).unwrap_or(&0.0) + delta * vsize * p_uni(w))
                / (context.get(&v).unwrap_or(&0.0) + delta * vsize)
        };

        for (seq, stream) in sequences.iter().zip(&streams) {
            let got = model.per_event_scores(seq, &templates);
            assert_eq!(got.len(), seq.len());
            for t in 1..stream.len() {
                let want = -p_cond(stream[t - 1], stream[t]).ln();
                assert!(
                    (got[t - 1] - want).abs() < 1e-12,
                    "seed {seed}, seq {}, position {t}: got {}, oracle {want}",
                    seq.sequence_id,
                    got[t - 1]
                );
            }
        }
    }
}

/// The deviation score recomputed directly from Eq. 5's definition.
#[test]
fn deviation_matches_direct_formula() {
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    for _ in 0..1_000 {
        let t = rng.gen_range(1..=40);
        let scores: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..12.0)).collect();
        let got = deviation_score(&scores).unwrap();
        let tf = t as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, s) in scores.iter().enumerate() {
            let w = ((i + 1) as f64 / tf).exp();
            num += s * w;
            den += w;
        }
        assert!((got - num / den).abs() < 1e-12);
    }
}

/// Positional weights are strictly increasing in t for lengths up to 10,000,
/// and bounded by (1, e].
#[test]
fn positional_weights_strictly_increase() {
    for t_len in [1usize, 2, 3, 10, 117, 1_000, 10_000] {
        let w = positional_weights(t_len);
        assert_eq!(w.len(), t_len);
        for i in 1..w.len() {
            assert!(w[i] > w[i - 1], "T={t_len}: w[{i}] not increasing");
        }
        assert!(w[t_len - 1] <= std::f64::consts::E + 1e-15);
        assert!(w[0] > 1.0 || t_len == 1);
        assert!((w[t_len - 1] - std::f64::consts::E).abs() < 1e-15);
    }
}

/// End-of-sequence emphasis: moving a fixed spike of surprisal later in an
/// otherwise-flat sequence strictly increases the deviation score.
#[test]
fn deviation_grows_when_surprisal_moves_late() {
    for t in [2usize, 5, 20, 100] {
        let mut last = f64::NEG_INFINITY;
        for pos in 0..t {
            let mut scores = vec![1.0; t];
            scores[pos] = 9.0;
            let s = deviation_score(&scores).unwrap();
            assert!(s > last, "T={t}, spike at {pos} did not increase the score");
            last = s;
        }
    }
}

/// The attention backend scores through the same deviation pipeline and
/// stays finite and positive on corpus data (its distribution oracle lives
/// in the unit gradcheck; this pins the integration path).
#[test]
fn attention_backend_scores_are_finite() {
    let (sequences, templates) = benign_corpus(99);
    let config = SeqTrainConfig {
        backend: Backend::Attention,
        attention: bacalarm_core::seqmodel::AttentionConfig {
            dim: 16,
            heads: 2,
            layers: 1,
            ff: 32,
            epochs: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    let model = NextEventModel::train(&sequences[..6], &templates, &config).unwrap();
    for seq in &sequences[..6] {
        let dev = model.deviation(seq, &templates);
        assert!(dev.is_finite() && dev > 0.0);
        let scores = model.per_event_scores(seq, &templates);
        assert_eq!(scores.len(), seq.len());
        assert!(scores.iter().all(|s| s.is_finite() && *s > 0.0));
    }
}
