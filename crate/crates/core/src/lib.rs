//! Knowledge-graph process supervision for chain-of-thought QA: composite
//! rewards over extracted entities and relations, hard-example mining, and a
//! desk-scale GRPO trainer that exercises the full reward path.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod extract;
pub mod grpo;
pub mod kgraph;
pub mod metrics;
pub mod mining;
pub mod reward;

pub use config::RunConfig;
pub use corpus::{
    load_candidates, load_corpus, normalize_answer, parse_response, render_response,
    AnswerType, CandidateResponse, NormalizedAnswer, QARecord, QuestionType, Task,
};
pub use error::{Error, Result};
pub use extract::{
    extract_entities, extract_record, extract_relations, Entity, EntityType, Lexicon, PatternSet,
    RelationType, Triplet,
};
pub use grpo::{
    group_advantages, grpo_objective, kl_k3, train, GrpoConfig, ToyEnvironment, ToyPolicy,
    TrajectoryPoint,
};
pub use kgraph::{KnowledgeGraph, NodeAlignment, DEFAULT_ALIGN_THRESHOLD};
pub use metrics::{
    corpus_report, graph_metrics, hit_rate, kg_ams, kg_nsc, kg_scs, micro_prf, CorpusReport,
    GraphMetrics, MissRateRow, ReportConfig,
};
pub use mining::{
    combined_similarity, cosine, mine, normalized_logprob, select_hard, stratified_sample,
    topk_retrieve, MinedRecord, MiningConfig,
};
pub use reward::{
    answer_reward, composite_reward, entity_reward, relation_reward, set_match, MatchMetric,
    RewardBreakdown, RewardWeights,
};
