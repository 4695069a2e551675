//! Corpus-level evaluation: answer accuracy, micro-averaged entity and
//! relation P/R/F1, graph-structural metrics, hit rate, and relation
//! miss-rate reporting.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::corpus::{normalize_answer, CandidateResponse, NormalizedAnswer, QARecord};
use crate::error::{Error, Result};
use crate::extract::{extract_record, Entity, Lexicon, PatternSet, Triplet};
use crate::kgraph::{align, KnowledgeGraph, NodeAlignment, DEFAULT_ALIGN_THRESHOLD};
use crate::reward::answer_reward;

/// Structural similarity scores between a reference and a generated graph.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GraphMetrics {
    pub nsc: f64,
    pub ams: f64,
    pub scs: f64,
}

/// Node coverage: the mean over reference nodes of the best generated-node
/// similarity. An empty reference is vacuously covered.
pub fn kg_nsc(reference: &KnowledgeGraph, generated: &KnowledgeGraph) -> f64 {
    if reference.is_empty() {
        return 1.0;
    }
    if generated.is_empty() {
        return 0.0;
    }
    let alignment = align(reference, generated, DEFAULT_ALIGN_THRESHOLD);
    alignment.best_scores.iter().sum::<f64>() / alignment.best_scores.len() as f64
}

/// Pearson correlation between two binary rows with the constant-row
/// convention: identical rows score 1, otherwise a constant row scores 0.
fn row_correlation(x: &[u8], y: &[u8]) -> f64 {
    let n = x.len() as f64;
    let mean = |v: &[u8]| v.iter().map(|&b| b as f64).sum::<f64>() / n;
    let mx = mean(x);
    let my = mean(y);
    let var = |v: &[u8], m: f64| v.iter().map(|&b| (b as f64 - m).powi(2)).sum::<f64>();
    let vx = var(x, mx);
    let vy = var(y, my);
    if vx == 0.0 || vy == 0.0 {
        return if x == y { 1.0 } else { 0.0 };
    }
    let cov: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (a as f64 - mx) * (b as f64 - my))
        .sum();
    cov / (vx * vy).sqrt()
}

/// Adjacency-structure similarity: per-row weighted Pearson correlation
/// between the reference adjacency and the alignment-mapped generated
/// adjacency. Row weights are max(1, reference node degree).
#[allow(clippy::needless_range_loop)]
pub fn kg_ams(
    reference: &KnowledgeGraph,
    generated: &KnowledgeGraph,
    alignment: &NodeAlignment,
) -> f64 {
    let n = reference.nodes.len();
    if n == 0 {
        return 1.0;
    }
    let m_ref = reference.adjacency();
    let gen_adj = generated.adjacency();
    let mut m_gen = vec![vec![0u8; n]; n];
    for i in 0..n {
        for j in 0..n {
            if let (Some((gi, _)), Some((gj, _))) = (alignment.mapping[i], alignment.mapping[j]) {
                m_gen[i][j] = gen_adj[gi][gj];
            }
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let w = reference.degree(i).max(1) as f64;
        num += w * row_correlation(&m_gen[i], &m_ref[i]);
        den += w;
    }
    num / den
}

/// Salient-subgraph coverage over single-triplet subgraphs: the importance-
/// weighted mean of presence scores for the top-k most important reference
/// triplets. Presence combines exact edge reproduction with the mean node
/// coverage score of the two endpoints.
pub fn kg_scs(
    reference: &KnowledgeGraph,
    generated: &KnowledgeGraph,
    alignment: &NodeAlignment,
    importance: &BTreeMap<Triplet, f64>,
    k: usize,
) -> f64 {
    if reference.edges.is_empty() {
        return 1.0;
    }
    let mut ranked: Vec<(&Triplet, f64)> = reference
        .edges
        .iter()
        .map(|t| (t, importance.get(t).copied().unwrap_or(1.0)))
        .collect();
    ranked.sort_by(|(ta, ia), (tb, ib)| {
        ib.partial_cmp(ia)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ta.cmp(tb))
    });
    let k = k.min(ranked.len()).max(1);
    let mut num = 0.0;
    let mut den = 0.0;
    for (triplet, imp) in ranked.into_iter().take(k) {
        let hi = reference.node_index(&triplet.head).expect("edge endpoint in nodes");
        let ti = reference.node_index(&triplet.tail).expect("edge endpoint in nodes");
        let edge_present = match (alignment.mapping[hi], alignment.mapping[ti]) {
            (Some((gh, _)), Some((gt, _))) => {
                let mapped = Triplet::new(
                    generated.nodes[gh].clone(),
                    triplet.relation,
                    generated.nodes[gt].clone(),
                );
                mapped.is_some_and(|t| generated.edges.contains(&t))
            }
            _ => false,
        };
        let edge_term = if edge_present { 1.0 } else { 0.0 };
        let node_term = (alignment.best_scores[hi] + alignment.best_scores[ti]) / 2.0;
        num += imp * 0.5 * (edge_term + node_term);
        den += imp;
    }
    num / den
}

/// Computes all three structural metrics in one pass.
pub fn graph_metrics(
    reference: &KnowledgeGraph,
    generated: &KnowledgeGraph,
    importance: &BTreeMap<Triplet, f64>,
    align_threshold: f64,
    scs_k: usize,
) -> GraphMetrics {
    let alignment = align(reference, generated, align_threshold);
    GraphMetrics {
        nsc: kg_nsc(reference, generated),
        ams: kg_ams(reference, generated, &alignment),
        scs: kg_scs(reference, generated, &alignment, importance, scs_k),
    }
}

/// Fraction of candidates whose normalized answer (every item, for list
/// answers) appears verbatim inside the lowercased think text.
pub fn hit_rate(candidates: &[&CandidateResponse]) -> f64 {
    if candidates.is_empty() {
        return 0.0;
    }
    let hits = candidates
        .iter()
        .filter(|c| {
            let think = c.think.to_lowercase();
            match normalize_answer(&c.answer) {
                NormalizedAnswer::Scalar(s) => !s.is_empty() && think.contains(&s),
                NormalizedAnswer::Set(items) => {
                    !items.is_empty() && items.iter().all(|i| think.contains(i.as_str()))
                }
            }
        })
        .count();
    hits as f64 / candidates.len() as f64
}

/// One row of the relation miss-rate table.
#[derive(Debug, Clone, Serialize)]
pub struct MissRateRow {
    pub triplet: String,
    pub frequency: usize,
    pub miss_rate: f64,
}

/// Per-triplet miss rates over reference triplets with corpus frequency
/// above `min_frequency`, sorted by descending miss rate.
pub fn miss_rate_report(
    reference_triplets: &[BTreeSet<Triplet>],
    generated_triplets: &[BTreeSet<Triplet>],
    min_frequency: usize,
) -> Vec<MissRateRow> {
    let mut frequency: BTreeMap<&Triplet, usize> = BTreeMap::new();
    for refs in reference_triplets {
        for t in refs {
            *frequency.entry(t).or_insert(0) += 1;
        }
    }
    let mut rows: Vec<MissRateRow> = frequency
        .into_iter()
        .filter(|&(_, freq)| freq > min_frequency)
        .map(|(t, freq)| {
            let misses = reference_triplets
                .iter()
                .zip(generated_triplets)
                .filter(|(refs, gens)| refs.contains(t) && !gens.contains(t))
                .count();
            MissRateRow {
                triplet: t.to_string(),
                frequency: freq,
                miss_rate: misses as f64 / freq as f64,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.miss_rate
            .partial_cmp(&a.miss_rate)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.triplet.cmp(&b.triplet))
    });
    rows
}

/// Micro-averaged precision/recall/F1 from pooled counts, using the same
/// empty-set conventions as per-record set matching.
pub fn micro_prf(inter: usize, gen: usize, reference: usize) -> (f64, f64, f64) {
    if gen == 0 && reference == 0 {
        return (1.0, 1.0, 1.0);
    }
    if gen == 0 || reference == 0 {
        return (0.0, 0.0, 0.0);
    }
    let p = inter as f64 / gen as f64;
    let r = inter as f64 / reference as f64;
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusReport {
    pub num_records: usize,
    pub overall_accuracy: f64,
    pub accuracy_by_question_type: BTreeMap<String, f64>,
    pub counts_by_question_type: BTreeMap<String, usize>,
    pub accuracy_by_answer_type: BTreeMap<String, f64>,
    pub counts_by_answer_type: BTreeMap<String, usize>,
    pub entity_precision: f64,
    pub entity_recall: f64,
    pub entity_f1: f64,
    pub relation_precision: f64,
    pub relation_recall: f64,
    pub relation_f1: f64,
    pub mean_nsc: f64,
    pub mean_ams: f64,
    pub mean_scs: f64,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ReportConfig {
    pub align_threshold: f64,
    pub scs_k: usize,
    pub min_frequency: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            align_threshold: DEFAULT_ALIGN_THRESHOLD,
            scs_k: 10,
            min_frequency: 20,
        }
    }
}

pub type Extraction = (BTreeSet<Entity>, BTreeSet<Triplet>);

/// Aggregates all metrics over a corpus, taking the first candidate per
/// record. `sidecar` entries override the generated-side extraction.
pub fn corpus_report(
    corpus: &[QARecord],
    candidates: &[CandidateResponse],
    lexicon: &Lexicon,
    patterns: &PatternSet,
    sidecar: Option<&BTreeMap<String, Extraction>>,
    config: &ReportConfig,
) -> Result<(CorpusReport, Vec<MissRateRow>)> {
    let mut first_by_id: HashMap<&str, &CandidateResponse> = HashMap::new();
    for c in candidates {
        first_by_id.entry(c.record_id.as_str()).or_insert(c);
    }

    let mut chosen = Vec::with_capacity(corpus.len());
    let mut ref_extractions = Vec::with_capacity(corpus.len());
    let mut gen_extractions = Vec::with_capacity(corpus.len());
    for record in corpus {
        let candidate = first_by_id
            .get(record.id.as_str())
            .ok_or_else(|| Error::MissingCandidate(record.id.clone()))?;
        chosen.push(*candidate);
        ref_extractions.push(extract_record(&record.reference_think, lexicon, patterns));
        let gen = sidecar
            .and_then(|s| s.get(&record.id).cloned())
            .unwrap_or_else(|| extract_record(&candidate.think, lexicon, patterns));
        gen_extractions.push(gen);
    }

    // reference triplet frequencies drive subgraph importance
    let mut importance: BTreeMap<Triplet, f64> = BTreeMap::new();
    for (_, triplets) in &ref_extractions {
        for t in triplets {
            *importance.entry(t.clone()).or_insert(0.0) += 1.0;
        }
    }

    let mut correct = 0.0;
    let mut by_qt: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut by_at: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let (mut ent_inter, mut ent_gen, mut ent_ref) = (0, 0, 0);
    let (mut rel_inter, mut rel_gen, mut rel_ref) = (0, 0, 0);
    let (mut nsc_sum, mut ams_sum, mut scs_sum) = (0.0, 0.0, 0.0);

    for ((record, candidate), (ref_ex, gen_ex)) in corpus
        .iter()
        .zip(&chosen)
        .zip(ref_extractions.iter().zip(&gen_extractions))
    {
        let acc = answer_reward(&candidate.answer, &record.reference_answer);
        correct += acc;
        let qt = by_qt.entry(record.question_type.to_string()).or_insert((0.0, 0));
        qt.0 += acc;
        qt.1 += 1;
        let at = by_at.entry(record.answer_type.to_string()).or_insert((0.0, 0));
        at.0 += acc;
        at.1 += 1;

        ent_inter += gen_ex.0.intersection(&ref_ex.0).count();
        ent_gen += gen_ex.0.len();
        ent_ref += ref_ex.0.len();
        rel_inter += gen_ex.1.intersection(&ref_ex.1).count();
        rel_gen += gen_ex.1.len();
        rel_ref += ref_ex.1.len();

        let ref_graph = graph_of(ref_ex);
        let gen_graph = graph_of(gen_ex);
        let gm = graph_metrics(
            &ref_graph,
            &gen_graph,
            &importance,
            config.align_threshold,
            config.scs_k.min(ref_graph.edges.len().max(1)),
        );
        nsc_sum += gm.nsc;
        ams_sum += gm.ams;
        scs_sum += gm.scs;
    }

    let n = corpus.len().max(1) as f64;
    let (ep, er, ef1) = micro_prf(ent_inter, ent_gen, ent_ref);
    let (rp, rr, rf1) = micro_prf(rel_inter, rel_gen, rel_ref);
    let ref_triplets: Vec<BTreeSet<Triplet>> =
        ref_extractions.iter().map(|(_, t)| t.clone()).collect();
    let gen_triplets: Vec<BTreeSet<Triplet>> =
        gen_extractions.iter().map(|(_, t)| t.clone()).collect();
    let miss_rows = miss_rate_report(&ref_triplets, &gen_triplets, config.min_frequency);

    let report = CorpusReport {
        num_records: corpus.len(),
        overall_accuracy: correct / n,
        accuracy_by_question_type: by_qt
            .iter()
            .map(|(k, (c, cnt))| (k.clone(), c / *cnt as f64))
            .collect(),
        counts_by_question_type: by_qt.iter().map(|(k, (_, cnt))| (k.clone(), *cnt)).collect(),
        accuracy_by_answer_type: by_at
            .iter()
            .map(|(k, (c, cnt))| (k.clone(), c / *cnt as f64))
            .collect(),
        counts_by_answer_type: by_at.iter().map(|(k, (_, cnt))| (k.clone(), *cnt)).collect(),
        entity_precision: ep,
        entity_recall: er,
        entity_f1: ef1,
        relation_precision: rp,
        relation_recall: rr,
        relation_f1: rf1,
        mean_nsc: nsc_sum / n,
        mean_ams: ams_sum / n,
        mean_scs: scs_sum / n,
        hit_rate: hit_rate(&chosen),
    };
    Ok((report, miss_rows))
}

fn graph_of(extraction: &Extraction) -> KnowledgeGraph {
    let triplets: Vec<Triplet> = extraction.1.iter().cloned().collect();
    let entities: Vec<Entity> = extraction.0.iter().cloned().collect();
    KnowledgeGraph::build(&triplets, &entities)
}
