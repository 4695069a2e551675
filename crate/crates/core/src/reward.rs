//! Knowledge-graph consistency reward: set matching on entities and
//! triplets, binary answer correctness, and their weighted composite.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::normalize_answer;
use crate::extract::{Entity, Triplet};

/// Weights of the composite reward R = w_ans*R_ans + w_ent*R_ent + w_rel*R_rel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_ans: f64,
    pub w_ent: f64,
    pub w_rel: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_ans: 1.0,
            w_ent: 0.5,
            w_rel: 0.5,
        }
    }
}

/// Set-matching metric used for the process reward and its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMetric {
    Jaccard,
    F1,
    Precision,
    Recall,
}

impl MatchMetric {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_lowercase().as_str() {
            "jaccard" => Some(MatchMetric::Jaccard),
            "f1" => Some(MatchMetric::F1),
            "precision" => Some(MatchMetric::Precision),
            "recall" => Some(MatchMetric::Recall),
            _ => None,
        }
    }
}

/// Per-candidate reward components plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_ans: f64,
    pub r_ent: f64,
    pub r_rel: f64,
    pub total: f64,
}

/// Compares generated and reference sets under the chosen metric.
///
/// Conventions: both empty -> 1.0, exactly one empty -> 0.0, P+R = 0 -> F1 = 0.
pub fn set_match<T: Ord>(generated: &BTreeSet<T>, reference: &BTreeSet<T>, metric: MatchMetric) -> f64 {
    if generated.is_empty() && reference.is_empty() {
        return 1.0;
    }
    if generated.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let inter = generated.intersection(reference).count() as f64;
    match metric {
        MatchMetric::Jaccard => {
            let union = generated.union(reference).count() as f64;
            inter / union
        }
        MatchMetric::Precision => inter / generated.len() as f64,
        MatchMetric::Recall => inter / reference.len() as f64,
        MatchMetric::F1 => {
            let p = inter / generated.len() as f64;
            let r = inter / reference.len() as f64;
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        }
    }
}

pub fn entity_reward(
    generated: &BTreeSet<Entity>,
    reference: &BTreeSet<Entity>,
    metric: MatchMetric,
) -> f64 {
    set_match(generated, reference, metric)
}

pub fn relation_reward(
    generated: &BTreeSet<Triplet>,
    reference: &BTreeSet<Triplet>,
    metric: MatchMetric,
) -> f64 {
    set_match(generated, reference, metric)
}

/// Binary answer correctness after normalization.
pub fn answer_reward(candidate_answer: &str, reference_answer: &str) -> f64 {
    if normalize_answer(candidate_answer) == normalize_answer(reference_answer) {
        1.0
    } else {
        0.0
    }
}

/// Combines components into the weighted total.
pub fn composite_reward(r_ans: f64, r_ent: f64, r_rel: f64, weights: RewardWeights) -> RewardBreakdown {
    RewardBreakdown {
        r_ans,
        r_ent,
        r_rel,
        total: weights.w_ans * r_ans + weights.w_ent * r_ent + weights.w_rel * r_rel,
    }
}
