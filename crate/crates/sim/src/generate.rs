//! The full generation cycle: role → behavior → retrieval → prompt → plan →
//! execute → filter, repeated until the target count is reached or the
//! attempt budget runs out.

use crate::behavior::{describe_behavior, describe_behavior_llm};
use crate::executor::Executor;
use crate::filter::{filter_hallucinations, FilterOutcome};
use crate::llm::LlmClient;
use crate::plan::generate_plan;
use crate::prompt::build_prompt;
use crate::report::{GenerationReport, ReportCounters};
use crate::role::assign_role;
use crate::SimError;
use bacalarm_core::miner::KnowledgeItem;
use bacalarm_core::retrieval::{LshConfig, LshIndex};
use bacalarm_core::traffic::TrafficSequence;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// Tuning for one [`generate`] run.
#[derive(Debug, Clone)]
pub struct GenerateConfig {
    /// Kept-sequence target.
    pub n: usize,
    /// Attempt budget as a multiple of `n`; generation stops after
    /// `attempt_factor * n` attempts even if fewer than `n` were kept.
    pub attempt_factor: usize,
    /// Plan-repair resubmissions per attempt.
    pub max_repairs: usize,
    /// Endpoints retrieved into each prompt.
    pub retrieval_k: usize,
    /// Concurrent attempt workers. With more than one worker the kept count
    /// may overshoot `n` by up to `parallelism - 1`; counters always
    /// describe the returned corpus exactly.
    pub parallelism: usize,
    pub seed: u64,
    /// Delegate behavior descriptions to the LLM instead of the phrase bank.
    pub llm_behavior: bool,
    /// Epoch-milliseconds origin for logical timestamps.
    pub base_timestamp: i64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            n: 500,
            attempt_factor: 3,
            max_repairs: 2,
            retrieval_k: 8,
            parallelism: 1,
            seed: 0,
            llm_behavior: true,
            base_timestamp: 1_700_000_000_000,
        }
    }
}

/// Runs the generation cycle against a live (or mock) LLM and target.
///
/// Returns the kept sequences in attempt order plus the conserved report.
/// Transport failures abort the whole run — an unreachable endpoint would
/// otherwise burn the entire attempt budget one timeout at a time.
pub fn generate(
    knowledge: &[KnowledgeItem],
    llm: &LlmClient,
    executor: &Executor,
    config: &GenerateConfig,
) -> Result<(Vec<TrafficSequence>, GenerationReport), SimError> {
    if knowledge.is_empty() {
        return Err(SimError::EmptyKnowledge);
    }
    let started = Instant::now();
    let index = LshIndex::index(knowledge, LshConfig::default())
        .expect("knowledge is non-empty, indexing cannot fail");
    let by_id: BTreeMap<u64, &KnowledgeItem> =
        knowledge.iter().map(|item| (item.template.template_id, item)).collect();

    let budget = config.attempt_factor.max(1) * config.n;
    let next_attempt = AtomicU64::new(0);
    let kept_count = AtomicU64::new(0);
    let counters = ReportCounters::default();
    let kept: Mutex<Vec<(u64, TrafficSequence)>> = Mutex::new(Vec::new());
    let abort: Mutex<Option<SimError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..config.parallelism.max(1) {
            scope.spawn(|| loop {
                if abort.lock().unwrap().is_some() {
                    return;
                }
                if kept_count.load(Ordering::SeqCst) >= config.n as u64 {
                    return;
                }
                let attempt = next_attempt.fetch_add(1, Ordering::SeqCst);
                if attempt >= budget as u64 {
                    return;
                }
                // Per-attempt RNG stream: deterministic regardless of which
                // worker claims the attempt.
                let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
                rng.set_stream(attempt + 1);

                let role = assign_role(&mut rng);
                let behavior = if config.llm_behavior {
                    match describe_behavior_llm(llm, role, knowledge) {
                        Ok((text, tokens)) => {
                            counters.llm_tokens.fetch_add(tokens, Ordering::SeqCst);
                            text
                        }
                        Err(error) => {
                            *abort.lock().unwrap() = Some(error);
                            return;
                        }
                    }
                } else {
                    describe_behavior(role, &mut rng, knowledge)
                };

                let mut retrieved: Vec<KnowledgeItem> = index
                    .retrieve(&behavior, config.retrieval_k.max(1))
                    .into_iter()
                    .filter_map(|(id, _)| by_id.get(&id).map(|item| (*item).clone()))
                    .collect();
                if retrieved.is_empty() {
                    // A description disjoint from every endpoint still needs
                    // grounding; hand the planner the head of the base.
                    retrieved = by_id.values().take(config.retrieval_k.max(1)).map(|i| (*i).clone()).collect();
                }
                let prompt = build_prompt(role, &behavior, &retrieved);

                match generate_plan(llm, role, &behavior, &prompt, config.max_repairs) {
                    Ok(outcome) => {
                        counters.llm_tokens.fetch_add(outcome.llm_tokens, Ordering::SeqCst);
                        let sequence_id = format!("sim-{attempt:06}");
                        let base_ts = config.base_timestamp + attempt as i64 * 1_000;
                        let executed = executor.execute(&outcome.plan, &sequence_id, base_ts);
                        counters.attempts.fetch_add(1, Ordering::SeqCst);
                        if executed.incomplete {
                            counters.incomplete.fetch_add(1, Ordering::SeqCst);
                        } else if filter_hallucinations(&executed.sequence, &outcome.plan)
                            == FilterOutcome::Keep
                        {
                            counters.kept.fetch_add(1, Ordering::SeqCst);
                            kept_count.fetch_add(1, Ordering::SeqCst);
                            kept.lock().unwrap().push((attempt, executed.sequence));
                        } else {
                            counters.discarded_hallucination.fetch_add(1, Ordering::SeqCst);
                        }
                    }
                    Err(failure) => {
                        counters.llm_tokens.fetch_add(failure.llm_tokens, Ordering::SeqCst);
                        match failure.error {
                            SimError::PlanParse { .. } | SimError::InvalidPlan(_) => {
                                counters.attempts.fetch_add(1, Ordering::SeqCst);
                                counters.discarded_parse.fetch_add(1, Ordering::SeqCst);
                            }
                            error => {
                                *abort.lock().unwrap() = Some(error);
                                return;
                            }
                        }
                    }
                }
            });
        }
    });

    if let Some(error) = abort.lock().unwrap().take() {
        return Err(error);
    }
    let mut sequences = kept.into_inner().unwrap();
    sequences.sort_by_key(|(attempt, _)| *attempt);
    let sequences: Vec<TrafficSequence> = sequences.into_iter().map(|(_, s)| s).collect();
    let report = counters.snapshot(started.elapsed().as_millis() as u64);
    debug_assert!(report.conserved());
    Ok((sequences, report))
}
