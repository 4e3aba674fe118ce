//! Core pipeline for BAC violation detection over composite API traffic:
//! the traffic data model, endpoint template mining, LSH retrieval over the
//! knowledge base, feature extraction, autoregressive sequence scoring, the
//! gated two-expert classifier, and evaluation metrics.

pub mod detector;
pub mod eval;
pub mod features;
pub mod fsutil;
pub mod miner;
pub mod retrieval;
pub mod seqmodel;
pub mod traffic;
