//! MinHash/LSH index over knowledge items.
//!
//! Each item is reduced to a token set (pattern tokens, semantics words,
//! parameter keys — lowercased), shingled, and minhashed with a seeded hash
//! family. Banded bucketing yields collision candidates; candidates are then
//! re-ranked by exact Jaccard against the query token set so results come
//! back ordered. The index is derived state: it is rebuilt from the
//! knowledge base and a seed rather than persisted.

use crate::miner::KnowledgeItem;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot build an index over zero items")]
    EmptyIndex,
}

/// Index construction parameters. `num_hashes` must equal
/// `bands * rows_per_band`.
#[derive(Debug, Clone)]
pub struct LshConfig {
    pub num_hashes: usize,
    pub bands: usize,
    pub rows_per_band: usize,
    /// Tokens per shingle; 1 means plain unigram tokens.
    pub shingle_width: usize,
    pub seed: u64,
}

impl Default for LshConfig {
    fn default() -> Self {
        Self { num_hashes: 128, bands: 32, rows_per_band: 4, shingle_width: 1, seed: 0 }
    }
}

/// Immutable similarity index over knowledge items.
#[derive(Debug)]
pub struct LshIndex {
    config: LshConfig,
    signatures: BTreeMap<u64, Vec<u64>>,
    buckets: HashMap<(usize, u64), BTreeSet<u64>>,
    token_sets: BTreeMap<u64, BTreeSet<String>>,
}

/// 64-bit seeded hash: FNV-1a folded through a splitmix64 finalizer.
/// Stable across runs and platforms, which keeps signatures reproducible.
fn hash_bytes(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed;
    for byte in bytes {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut z = h.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn hash_token(seed: u64, token: &str) -> u64 {
    hash_bytes(seed, token.as_bytes())
}

/// Lowercased word tokens of a free-text description.
pub fn text_tokens(text: &str) -> BTreeSet<String> {
    tokenize_text(text).into_iter().collect()
}

fn tokenize_text(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '<' || c == '*' || c == '>'))
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// Token set representing one knowledge item.
pub fn item_tokens(item: &KnowledgeItem) -> BTreeSet<String> {
    let mut tokens: Vec<String> = item
        .template
        .token_pattern
        .iter()
        .map(|t| t.render().to_lowercase())
        .collect();
    tokens.push(item.template.method.as_str().to_lowercase());
    tokens.extend(tokenize_text(&item.semantics));
    tokens.extend(item.allowed_params.keys().map(|k| k.to_lowercase()));
    tokens.into_iter().collect()
}

fn shingles(tokens: &BTreeSet<String>, width: usize) -> BTreeSet<String> {
    if width <= 1 {
        return tokens.clone();
    }
    let ordered: Vec<&String> = tokens.iter().collect();
    if ordered.len() < width {
        return tokens.clone();
    }
    ordered
        .windows(width)
        .map(|w| w.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" "))
        .collect()
}

fn minhash_signature(shingle_set: &BTreeSet<String>, num_hashes: usize, seed: u64) -> Vec<u64> {
    (0..num_hashes)
        .map(|i| {
            let fn_seed = seed.wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(i as u64 + 1));
            shingle_set.iter().map(|s| hash_token(fn_seed, s)).min().unwrap_or(u64::MAX)
        })
        .collect()
}

fn band_key(band: usize, rows: &[u64], seed: u64) -> u64 {
    let mut acc = seed ^ (band as u64).wrapping_mul(0x2545f4914f6cdd1d);
    for r in rows {
        acc = hash_bytes(acc, &r.to_le_bytes());
    }
    acc
}

/// Exact Jaccard similarity of two token sets.
pub fn exact_jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    intersection as f64 / union as f64
}

impl LshIndex {
    /// Builds the index. Deterministic for a fixed seed and input order.
    pub fn index(items: &[KnowledgeItem], config: LshConfig) -> Result<Self, RetrievalError> {
        if items.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        assert_eq!(
            config.num_hashes,
            config.bands * config.rows_per_band,
            "num_hashes must equal bands * rows_per_band"
        );
        let mut signatures = BTreeMap::new();
        let mut buckets: HashMap<(usize, u64), BTreeSet<u64>> = HashMap::new();
        let mut token_sets = BTreeMap::new();
        for item in items {
            let id = item.template.template_id;
            let tokens = item_tokens(item);
            let sig = minhash_signature(&shingles(&tokens, config.shingle_width), config.num_hashes, config.seed);
            for band in 0..config.bands {
                let rows = &sig[band * config.rows_per_band..(band + 1) * config.rows_per_band];
                buckets.entry((band, band_key(band, rows, config.seed))).or_default().insert(id);
            }
            signatures.insert(id, sig);
            token_sets.insert(id, tokens);
        }
        Ok(Self { config, signatures, buckets, token_sets })
    }

    /// Estimated Jaccard similarity between two indexed items, from
    /// signature agreement.
    pub fn estimated_jaccard(&self, a: u64, b: u64) -> Option<f64> {
        let sa = self.signatures.get(&a)?;
        let sb = self.signatures.get(&b)?;
        let agree = sa.iter().zip(sb).filter(|(x, y)| x == y).count();
        Some(agree as f64 / sa.len() as f64)
    }

    pub fn signature(&self, id: u64) -> Option<&[u64]> {
        self.signatures.get(&id).map(Vec::as_slice)
    }

    /// Number of indexed items.
    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    /// Retrieves up to `k` items relevant to a behavior description.
    ///
    /// Bucket collisions supply candidates; candidates are ranked by exact
    /// Jaccard between the query tokens and item tokens, descending, ties by
    /// item id ascending. Zero-score items are dropped, so a query disjoint
    /// from the whole base returns an empty list.
    ///
    /// When no bucket collides at all — plausible for short queries whose
    /// overlap sits below the banding sweet spot — every item becomes a
    /// candidate and the exact re-rank decides. Knowledge bases are small
    /// enough that this recall fallback costs one linear scan.
    pub fn retrieve(&self, description: &str, k: usize) -> Vec<(u64, f64)> {
        assert!(k >= 1, "k must be at least 1");
        let query_tokens = text_tokens(description);
        if query_tokens.is_empty() {
            return Vec::new();
        }
        let sig = minhash_signature(
            &shingles(&query_tokens, self.config.shingle_width),
            self.config.num_hashes,
            self.config.seed,
        );
        let mut candidates: BTreeSet<u64> = BTreeSet::new();
        for band in 0..self.config.bands {
            let rows = &sig[band * self.config.rows_per_band..(band + 1) * self.config.rows_per_band];
            if let Some(ids) = self.buckets.get(&(band, band_key(band, rows, self.config.seed))) {
                candidates.extend(ids);
            }
        }
        if candidates.is_empty() {
            candidates.extend(self.signatures.keys());
        }
        let mut scored: Vec<(u64, f64)> = candidates
            .into_iter()
            .map(|id| (id, exact_jaccard(&query_tokens, &self.token_sets[&id])))
            .filter(|(_, score)| *score > 0.0)
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miner::{ApiTemplate, AuthIndicator, PathToken};
    use crate::traffic::Method;
    use std::collections::BTreeMap;

    fn item(id: u64, method: Method, tokens: &[&str], semantics: &str) -> KnowledgeItem {
        KnowledgeItem {
            template: ApiTemplate {
                template_id: id,
                method,
                token_pattern: tokens
                    .iter()
                    .map(|t| if *t == "<*>" { PathToken::Wildcard } else { PathToken::Literal(t.to_string()) })
                    .collect(),
                support: 1,
            },
            semantics: semantics.to_string(),
            allowed_params: BTreeMap::new(),
            auth_indicator: AuthIndicator::Unknown,
        }
    }

    #[test]
    fn empty_items_rejected() {
        assert!(matches!(LshIndex::index(&[], LshConfig::default()), Err(RetrievalError::EmptyIndex)));
    }

    #[test]
    fn single_item_lands_in_every_band() {
        let idx = LshIndex::index(&[item(0, Method::GET, &["api", "users"], "list users")], LshConfig::default())
            .unwrap();
        let appearances: usize = idx.buckets.values().map(|ids| ids.iter().filter(|id| **id == 0).count()).sum();
        assert_eq!(appearances, idx.config.bands);
    }

    #[test]
    fn same_seed_same_signatures() {
        let items = vec![
            item(0, Method::GET, &["api", "users", "<*>"], "get user detail"),
            item(1, Method::POST, &["api", "spaces"], "create space"),
        ];
        let a = LshIndex::index(&items, LshConfig::default()).unwrap();
        let b = LshIndex::index(&items, LshConfig::default()).unwrap();
        assert_eq!(a.signatures, b.signatures);
    }

    #[test]
    fn exact_token_match_ranks_first_with_score_one() {
        let items = vec![
            item(3, Method::GET, &["api", "users", "<*>", "profile"], "get user profile"),
            item(5, Method::GET, &["api", "spaces", "<*>"], "get space detail"),
        ];
        let idx = LshIndex::index(&items, LshConfig::default()).unwrap();
        // Query containing exactly the first item's token set.
        let query = item_tokens(&items[0]).into_iter().collect::<Vec<_>>().join(" ");
        let results = idx.retrieve(&query, 4);
        assert_eq!(results[0].0, 3);
        assert!((results[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_query_returns_nothing() {
        let items = vec![item(0, Method::GET, &["api", "users"], "list users")];
        let idx = LshIndex::index(&items, LshConfig::default()).unwrap();
        assert!(idx.retrieve("zzz qqq www", 3).is_empty());
    }

    #[test]
    fn profile_query_prefers_profile_endpoint() {
        let items = vec![
            item(0, Method::GET, &["api", "spaces", "<*>", "members"], "list space members"),
            item(1, Method::PUT, &["api", "users", "<*>", "profile"], "update user profile"),
        ];
        let idx = LshIndex::index(&items, LshConfig::default()).unwrap();
        let results = idx.retrieve("user profile update", 2);
        assert_eq!(results[0].0, 1);
        // Hand oracle: query {user, profile, update} vs item tokens.
        let q = text_tokens("user profile update");
        assert!((results[0].1 - exact_jaccard(&q, &item_tokens(&items[1]))).abs() < 1e-12);
    }

    #[test]
    fn never_more_than_k() {
        let items: Vec<_> =
            (0..20).map(|i| item(i, Method::GET, &["api", "users"], &format!("users op {i}"))).collect();
        let idx = LshIndex::index(&items, LshConfig::default()).unwrap();
        assert!(idx.retrieve("api users", 5).len() <= 5);
    }
}
