//! Hard-example mining: stratified sampling, confidence scoring, hard-set
//! selection, and Top-K retrieval over precomputed embeddings.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnswerType, CandidateResponse, QARecord, QuestionType};
use crate::error::{Error, Result};
use crate::reward::answer_reward;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MiningConfig {
    /// Stratified sampling ratio.
    pub gamma: f64,
    /// Log-probability threshold below which a correct answer counts as hard.
    pub sigma: f64,
    /// Retrieval depth; 0 disables retrieval.
    pub top_k: usize,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            gamma: 0.02,
            sigma: -0.25,
            top_k: 5,
            seed: 0,
        }
    }
}

/// A candidate scored for hard-example selection.
#[derive(Debug, Clone, Serialize)]
pub struct ScoredCandidate {
    pub record_id: String,
    pub is_correct: bool,
    /// Length-normalized answer log-probability.
    pub p: f64,
}

/// Arithmetic mean of per-token natural log-probabilities.
pub fn normalized_logprob(token_logprobs: &[f64]) -> Result<f64> {
    if token_logprobs.is_empty() {
        return Err(Error::EmptyAnswer);
    }
    Ok(token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64)
}

/// Samples ceil(gamma * n) records per (question_type, answer_type) stratum,
/// uniformly without replacement. Every non-empty stratum contributes at
/// least one record. Output preserves corpus order.
pub fn stratified_sample(records: &[QARecord], gamma: f64, seed: u64) -> Vec<&QARecord> {
    let mut strata: BTreeMap<(QuestionType, AnswerType), Vec<usize>> = BTreeMap::new();
    for (idx, record) in records.iter().enumerate() {
        strata
            .entry((record.question_type, record.answer_type))
            .or_default()
            .push(idx);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = BTreeSet::new();
    for indices in strata.values() {
        let take = ((gamma * indices.len() as f64).ceil() as usize)
            .max(1)
            .min(indices.len());
        let mut pool = indices.clone();
        pool.shuffle(&mut rng);
        selected.extend(pool.into_iter().take(take));
    }
    selected.into_iter().map(|i| &records[i]).collect()
}

/// Hard records: wrong answers, plus correct answers with confidence below
/// sigma.
pub fn select_hard(scored: &[ScoredCandidate], sigma: f64) -> BTreeSet<String> {
    scored
        .iter()
        .filter(|c| !c.is_correct || c.p < sigma)
        .map(|c| c.record_id.clone())
        .collect()
}

pub fn cosine(a: &[f64], b: &[f64], modality: &str) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            modality: modality.to_string(),
            a: a.len(),
            b: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    // a zero vector contributes zero similarity rather than NaN
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}

fn embedding<'a>(record: &'a QARecord, modality: &str) -> Result<&'a [f64]> {
    let emb = match modality {
        "Q" => &record.emb_q,
        "T" => &record.emb_t,
        _ => &record.emb_v,
    };
    emb.as_deref().ok_or_else(|| Error::MissingEmbedding {
        id: record.id.clone(),
        modality: modality.to_string(),
    })
}

/// Sum of per-modality cosine similarities over Q, T, and V embeddings.
pub fn combined_similarity(a: &QARecord, b: &QARecord) -> Result<f64> {
    let mut total = 0.0;
    for modality in ["Q", "T", "V"] {
        total += cosine(embedding(a, modality)?, embedding(b, modality)?, modality)?;
    }
    Ok(total)
}

/// Per hard record, the K most similar rest records by combined similarity.
/// Ties break by ascending record id.
pub fn topk_retrieve<'a>(
    hard: &[&'a QARecord],
    rest: &[&'a QARecord],
    k: usize,
) -> Result<BTreeMap<String, Vec<String>>> {
    if k > rest.len() {
        return Err(Error::KTooLarge {
            k,
            pool: rest.len(),
        });
    }
    let mut out = BTreeMap::new();
    for h in hard {
        let mut scored: Vec<(f64, &str)> = rest
            .iter()
            .map(|r| Ok((combined_similarity(h, r)?, r.id.as_str())))
            .collect::<Result<_>>()?;
        scored.sort_by(|(sa, ida), (sb, idb)| {
            sb.partial_cmp(sa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ida.cmp(idb))
        });
        out.insert(
            h.id.clone(),
            scored.iter().take(k).map(|(_, id)| id.to_string()).collect(),
        );
    }
    Ok(out)
}

/// A mined training instance: the question plus its ground-truth reference.
#[derive(Debug, Clone, Serialize)]
pub struct MinedRecord {
    pub id: String,
    pub question: String,
    pub reference_think: String,
    pub reference_answer: String,
}

/// Full mining pipeline: stratified sample, score, select hard, retrieve
/// neighbors, and emit the deduplicated union in corpus order.
pub fn mine(
    corpus: &[QARecord],
    candidates: &[CandidateResponse],
    config: &MiningConfig,
) -> Result<Vec<MinedRecord>> {
    let by_id: HashMap<&str, &CandidateResponse> = candidates
        .iter()
        .map(|c| (c.record_id.as_str(), c))
        .collect();
    let sample = stratified_sample(corpus, config.gamma, config.seed);
    let mut scored = Vec::with_capacity(sample.len());
    for record in &sample {
        let candidate = by_id
            .get(record.id.as_str())
            .ok_or_else(|| Error::MissingCandidate(record.id.clone()))?;
        let is_correct = answer_reward(&candidate.answer, &record.reference_answer) == 1.0;
        // a candidate without token log-probs is treated as fully confident
        let p = match &candidate.answer_token_logprobs {
            Some(lps) => normalized_logprob(lps)?,
            None => 0.0,
        };
        scored.push(ScoredCandidate {
            record_id: record.id.clone(),
            is_correct,
            p,
        });
    }
    let hard_ids = select_hard(&scored, config.sigma);
    let mut selected: BTreeSet<String> = hard_ids.clone();
    if config.top_k > 0 {
        let hard: Vec<&QARecord> = corpus.iter().filter(|r| hard_ids.contains(&r.id)).collect();
        let rest: Vec<&QARecord> = corpus.iter().filter(|r| !hard_ids.contains(&r.id)).collect();
        for neighbors in topk_retrieve(&hard, &rest, config.top_k)?.into_values() {
            selected.extend(neighbors);
        }
    }
    Ok(corpus
        .iter()
        .filter(|r| selected.contains(&r.id))
        .map(|r| MinedRecord {
            id: r.id.clone(),
            question: r.question.clone(),
            reference_think: r.reference_think.clone(),
            reference_answer: r.reference_answer.clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Task;

    pub(crate) fn record(id: &str, qt: QuestionType, at: AnswerType) -> QARecord {
        QARecord {
            id: id.to_string(),
            task: Task::Basic,
            question_type: qt,
            answer_type: at,
            question: format!("question {id}"),
            reference_think: "lungs are clear".to_string(),
            reference_answer: "yes".to_string(),
            emb_q: None,
            emb_t: None,
            emb_v: None,
        }
    }

    #[test]
    fn normalized_logprob_cases() {
        let half = 0.5f64.ln();
        assert!((normalized_logprob(&[half, half]).unwrap() - half).abs() < 1e-12);
        assert_eq!(normalized_logprob(&[0.0]).unwrap(), 0.0);
        assert!(matches!(normalized_logprob(&[]), Err(Error::EmptyAnswer)));
        // invariant to duplication
        let v = normalized_logprob(&[-0.1, -0.3]).unwrap();
        let doubled = normalized_logprob(&[-0.1, -0.3, -0.1, -0.3]).unwrap();
        assert!((v - doubled).abs() < 1e-12);
    }

    #[test]
    fn stratified_sample_cases() {
        let records = vec![
            record("a", QuestionType::Presence, AnswerType::Closed),
            record("b", QuestionType::Presence, AnswerType::Closed),
            record("c", QuestionType::Anatomy, AnswerType::Open),
            record("d", QuestionType::Anatomy, AnswerType::Open),
        ];
        let sample = stratified_sample(&records, 0.5, 1);
        assert_eq!(sample.len(), 2);
        let qts: BTreeSet<_> = sample.iter().map(|r| r.question_type).collect();
        assert_eq!(qts.len(), 2);

        // gamma = 1 returns the full corpus in order
        let all = stratified_sample(&records, 1.0, 1);
        let ids: Vec<_> = all.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c", "d"]);

        // singleton stratum always included
        let records = vec![record("solo", QuestionType::Gender, AnswerType::Closed)];
        assert_eq!(stratified_sample(&records, 0.02, 9).len(), 1);
    }

    #[test]
    fn select_hard_cases() {
        let scored = vec![
            ScoredCandidate {
                record_id: "wrong".into(),
                is_correct: false,
                p: -0.05,
            },
            ScoredCandidate {
                record_id: "confident".into(),
                is_correct: true,
                p: -0.1,
            },
            ScoredCandidate {
                record_id: "unsure".into(),
                is_correct: true,
                p: -0.30,
            },
        ];
        let hard = select_hard(&scored, -0.25);
        assert!(hard.contains("wrong"));
        assert!(!hard.contains("confident"));
        assert!(hard.contains("unsure"));
    }

    fn with_embs(mut r: QARecord, q: Vec<f64>, t: Vec<f64>, v: Vec<f64>) -> QARecord {
        r.emb_q = Some(q);
        r.emb_t = Some(t);
        r.emb_v = Some(v);
        r
    }

    #[test]
    fn combined_similarity_cases() {
        let base = record("a", QuestionType::Presence, AnswerType::Closed);
        let a = with_embs(base.clone(), vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 0.0]);
        assert!((combined_similarity(&a, &a).unwrap() - 3.0).abs() < 1e-12);

        let b = with_embs(base.clone(), vec![0.0, 1.0], vec![2.0, 0.0], vec![0.0, 3.0]);
        assert_eq!(combined_similarity(&a, &b).unwrap(), 0.0);

        // Q cosine 1, T cosine 0.5, V zero vector -> 1.5
        let c = with_embs(
            base.clone(),
            vec![2.0, 0.0],
            vec![1.0, 3.0f64.sqrt()],
            vec![0.0, 0.0],
        );
        let d = with_embs(base.clone(), vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]);
        let s = combined_similarity(&c, &d).unwrap();
        assert!((s - 1.5).abs() < 1e-9);

        let missing = base.clone();
        assert!(matches!(
            combined_similarity(&a, &missing),
            Err(Error::MissingEmbedding { .. })
        ));

        let short = with_embs(base, vec![1.0], vec![0.0, 1.0], vec![1.0, 0.0]);
        assert!(matches!(
            combined_similarity(&a, &short),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn combined_similarity_symmetric_bounded() {
        let base = record("a", QuestionType::Presence, AnswerType::Closed);
        let a = with_embs(base.clone(), vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.4]);
        let b = with_embs(base, vec![-2.0, 1.0], vec![1.0, 1.0], vec![-0.4, 0.3]);
        let ab = combined_similarity(&a, &b).unwrap();
        let ba = combined_similarity(&b, &a).unwrap();
        assert_eq!(ab, ba);
        assert!((-3.0..=3.0).contains(&ab));
    }

    #[test]
    fn topk_matches_identity_and_bounds() {
        let base = record("h", QuestionType::Presence, AnswerType::Closed);
        let hard = with_embs(base.clone(), vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]);
        let mut rest = Vec::new();
        for (i, q) in [[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]].iter().enumerate() {
            let mut r = record(&format!("r{i}"), QuestionType::Presence, AnswerType::Closed);
            r = with_embs(r, q.to_vec(), vec![1.0, 0.0], vec![1.0, 0.0]);
            rest.push(r);
        }
        let hard_refs = vec![&hard];
        let rest_refs: Vec<&QARecord> = rest.iter().collect();
        // identical record ranks first with score 3
        let got = topk_retrieve(&hard_refs, &rest_refs, 3).unwrap();
        assert_eq!(got["h"][0], "r1");
        assert!(matches!(
            topk_retrieve(&hard_refs, &rest_refs, 4),
            Err(Error::KTooLarge { .. })
        ));
    }
}
