//! Interpolated bigram/unigram next-event estimator with additive smoothing.
//!
//! This is the reference backend: every probability it emits is a closed-form
//! function of corpus counts, so tests can verify it against an independently
//! counted oracle to 1e-12.
//!
//! With vocabulary V, smoothing mass δ > 0, unigram target counts c(w) over
//! N scored positions, bigram counts c(v,w) and context counts c(v):
//!
//! ```text
//! P_uni(w)  = (c(w) + δ) / (N + δ|V|)
//! P(w | v)  = (c(v,w) + δ|V|·P_uni(w)) / (c(v) + δ|V|)
//! ```
//!
//! Both distributions sum to exactly 1 and are strictly positive; as δ → 0
//! the conditional converges to the maximum-likelihood bigram estimate.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::BOS;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NgramModel {
    vocab_size: usize,
    delta: f64,
    unigram: BTreeMap<u32, u64>,
    bigram: BTreeMap<(u32, u32), u64>,
    context: BTreeMap<u32, u64>,
    total: u64,
}

impl NgramModel {
    /// Counts transitions over token streams of the form `[BOS, E_1, …, E_T]`.
    /// Targets are every token after the first; contexts include `BOS`.
    pub fn fit(streams: &[Vec<u32>], vocab_size: usize, delta: f64) -> Self {
        assert!(delta > 0.0, "smoothing mass must be positive");
        let mut unigram = BTreeMap::new();
        let mut bigram = BTreeMap::new();
        let mut context = BTreeMap::new();
        let mut total = 0u64;
        for stream in streams {
            for pair in stream.windows(2) {
                let (v, w) = (pair[0], pair[1]);
                debug_assert!((w as usize) < vocab_size && (v as usize) < vocab_size);
                *unigram.entry(w).or_default() += 1;
                *bigram.entry((v, w)).or_default() += 1;
                *context.entry(v).or_default() += 1;
                total += 1;
            }
        }
        NgramModel { vocab_size, delta, unigram, bigram, context, total }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Smoothed unigram probability of `w`.
    pub fn unigram_prob(&self, w: u32) -> f64 {
        let c = self.unigram.get(&w).copied().unwrap_or(0) as f64;
        (c + self.delta) / (self.total as f64 + self.delta * self.vocab_size as f64)
    }

    /// P(next | context): a bigram on the last context token, interpolated
    /// toward the unigram. Unseen contexts fall back to the unigram exactly.
    pub fn next_prob(&self, context: &[u32], next: u32) -> f64 {
        let v = context.last().copied().unwrap_or(BOS);
        let dv = self.delta * self.vocab_size as f64;
        let c_bi = self.bigram.get(&(v, next)).copied().unwrap_or(0) as f64;
        let c_ctx = self.context.get(&v).copied().unwrap_or(0) as f64;
        (c_bi + dv * self.unigram_prob(next)) / (c_ctx + dv)
    }

    pub fn next_distribution(&self, context: &[u32]) -> Vec<f64> {
        (0..self.vocab_size as u32).map(|w| self.next_prob(context, w)).collect()
    }
}
