//! Command implementations behind the CLI: each one is a pure function of
//! its inputs and seed, writing deterministic outputs under the output
//! directory.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::corpus::{load_candidates, load_corpus, CandidateResponse, QARecord};
use crate::error::{Error, Result};
use crate::extract::{extract_record, load_sidecar_triplets, Lexicon, PatternSet};
use crate::grpo::{train, ToyEnvironment, ToyPolicy};
use crate::kgraph::KnowledgeGraph;
use crate::metrics::{corpus_report, ReportConfig};
use crate::mining::mine;
use crate::reward::{answer_reward, composite_reward, entity_reward, relation_reward};

fn write_output(dir: &Path, name: &str, content: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_assets(config: &RunConfig) -> Result<(Lexicon, PatternSet)> {
    let lexicon = match &config.lexicon {
        Some(path) => Lexicon::load(path)?,
        None => Lexicon::default_asset(),
    };
    let patterns = match &config.patterns {
        Some(path) => PatternSet::load(path)?,
        None => PatternSet::default_asset(),
    };
    Ok((lexicon, patterns))
}

#[derive(serde::Deserialize)]
struct EmbeddingRow {
    id: String,
    #[serde(default)]
    emb_q: Option<Vec<f64>>,
    #[serde(default)]
    emb_t: Option<Vec<f64>>,
    #[serde(default)]
    emb_v: Option<Vec<f64>>,
}

/// Merges a sidecar embedding file into corpus records by id.
fn merge_embeddings(records: &mut [QARecord], path: &Path) -> Result<()> {
    let content = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut by_id: HashMap<String, EmbeddingRow> = HashMap::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: EmbeddingRow = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        by_id.insert(row.id.clone(), row);
    }
    for record in records {
        if let Some(row) = by_id.get(&record.id) {
            if row.emb_q.is_some() {
                record.emb_q = row.emb_q.clone();
            }
            if row.emb_t.is_some() {
                record.emb_t = row.emb_t.clone();
            }
            if row.emb_v.is_some() {
                record.emb_v = row.emb_v.clone();
            }
        }
    }
    Ok(())
}

fn load_corpus_with_embeddings(config: &RunConfig) -> Result<Vec<QARecord>> {
    let mut records = load_corpus(config.require("corpus")?)?;
    if let Some(path) = &config.embeddings {
        merge_embeddings(&mut records, path)?;
    }
    Ok(records)
}

fn graph_dump(graph: &KnowledgeGraph) -> serde_json::Value {
    json!({
        "nodes": graph
            .nodes
            .iter()
            .map(|n| json!({"text": n.canonical, "type": n.entity_type}))
            .collect::<Vec<_>>(),
        "edges": graph
            .edges
            .iter()
            .map(|e| json!({
                "head": e.head.canonical,
                "relation": e.relation,
                "tail": e.tail.canonical,
            }))
            .collect::<Vec<_>>(),
    })
}

fn jsonl<T: Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("serializable row"));
        out.push('\n');
    }
    out
}

/// Dumps per-record knowledge graphs (reference, plus generated when a
/// candidate file is supplied) as JSONL.
pub fn cmd_extract(config: &RunConfig) -> Result<()> {
    config.validate_inputs()?;
    let out = config.require("out")?.to_path_buf();
    let corpus = load_corpus(config.require("corpus")?)?;
    let (lexicon, patterns) = load_assets(config)?;
    let candidates = match &config.candidates {
        Some(path) => Some(load_candidates(path)?),
        None => None,
    };
    let first_by_id: HashMap<&str, &CandidateResponse> = candidates
        .as_deref()
        .unwrap_or(&[])
        .iter()
        .map(|c| (c.record_id.as_str(), c))
        .collect();

    let mut rows = Vec::with_capacity(corpus.len());
    for record in &corpus {
        let (entities, triplets) = extract_record(&record.reference_think, &lexicon, &patterns);
        let reference = KnowledgeGraph::build(
            &triplets.iter().cloned().collect::<Vec<_>>(),
            &entities.iter().cloned().collect::<Vec<_>>(),
        );
        let mut row = json!({"id": record.id, "reference": graph_dump(&reference)});
        if let Some(candidate) = first_by_id.get(record.id.as_str()) {
            let (entities, triplets) = extract_record(&candidate.think, &lexicon, &patterns);
            let generated = KnowledgeGraph::build(
                &triplets.iter().cloned().collect::<Vec<_>>(),
                &entities.iter().cloned().collect::<Vec<_>>(),
            );
            row["generated"] = graph_dump(&generated);
        }
        rows.push(row);
    }
    write_output(&out, "graphs.jsonl", &jsonl(&rows))
}

/// Scores every candidate against its record's references and emits one
/// reward breakdown per candidate.
pub fn cmd_score(config: &RunConfig) -> Result<()> {
    config.validate_inputs()?;
    let out = config.require("out")?.to_path_buf();
    let corpus = load_corpus(config.require("corpus")?)?;
    let candidates = load_candidates(config.require("candidates")?)?;
    let (lexicon, patterns) = load_assets(config)?;
    let weights = config.weights();
    let metric = config.match_metric()?;
    let sidecar = match &config.sidecar {
        Some(path) => Some(load_sidecar_triplets(path)?),
        None => None,
    };

    let by_id: HashMap<&str, &QARecord> = corpus.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut indices: HashMap<&str, usize> = HashMap::new();
    let mut rows = Vec::with_capacity(candidates.len());
    for candidate in &candidates {
        let record = by_id
            .get(candidate.record_id.as_str())
            .ok_or_else(|| Error::MissingCandidate(candidate.record_id.clone()))?;
        let index = indices.entry(candidate.record_id.as_str()).or_insert(0);
        let (ref_entities, ref_triplets) =
            extract_record(&record.reference_think, &lexicon, &patterns);
        let (gen_entities, gen_triplets) = sidecar
            .as_ref()
            .and_then(|s| s.get(&record.id).cloned())
            .unwrap_or_else(|| extract_record(&candidate.think, &lexicon, &patterns));
        let breakdown = composite_reward(
            answer_reward(&candidate.answer, &record.reference_answer),
            entity_reward(&gen_entities, &ref_entities, metric),
            relation_reward(&gen_triplets, &ref_triplets, metric),
            weights,
        );
        rows.push(json!({
            "record_id": candidate.record_id,
            "candidate_index": *index,
            "r_ans": breakdown.r_ans,
            "r_ent": breakdown.r_ent,
            "r_rel": breakdown.r_rel,
            "total": breakdown.total,
        }));
        *index += 1;
    }
    write_output(&out, "scores.jsonl", &jsonl(&rows))
}

/// Runs the full mining pipeline and writes the training-set JSONL.
pub fn cmd_mine(config: &RunConfig) -> Result<()> {
    config.validate_inputs()?;
    let out = config.require("out")?.to_path_buf();
    let corpus = load_corpus_with_embeddings(config)?;
    let candidates = load_candidates(config.require("candidates")?)?;
    let mined = mine(&corpus, &candidates, &config.mining_config())?;
    write_output(&out, "mined.jsonl", &jsonl(&mined))
}

/// Trains the toy policy on the bundled environment; writes the trajectory
/// CSV and the final parameters.
pub fn cmd_train(config: &RunConfig) -> Result<()> {
    config.validate_inputs()?;
    let out = config.require("out")?.to_path_buf();
    let env = ToyEnvironment::bundled();
    let mut policy = ToyPolicy::uniform(
        env.prompts.len(),
        env.slots,
        env.templates.len(),
        env.answer_vocab.len(),
    );
    let trajectory = train(
        &env,
        &mut policy,
        config.weights(),
        config.match_metric()?,
        &config.grpo_config(),
    )?;

    let mut csv = String::from("step,reward_mean,r_ans,r_ent,r_rel,kl_mean\n");
    for p in &trajectory {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.step, p.reward_mean, p.r_ans, p.r_ent, p.r_rel, p.kl_mean
        ));
    }
    write_output(&out, "trajectory.csv", &csv)?;
    let policy_json = serde_json::to_string_pretty(&policy).expect("serializable policy");
    write_output(&out, "policy.json", &policy_json)
}

/// Evaluates a candidate file against the corpus: JSON report plus the
/// relation miss-rate CSV.
pub fn cmd_eval(config: &RunConfig) -> Result<()> {
    config.validate_inputs()?;
    let out = config.require("out")?.to_path_buf();
    let corpus = load_corpus(config.require("corpus")?)?;
    let candidates = load_candidates(config.require("candidates")?)?;
    let (lexicon, patterns) = load_assets(config)?;
    let sidecar = match &config.sidecar {
        Some(path) => Some(load_sidecar_triplets(path)?),
        None => None,
    };
    let report_config = ReportConfig {
        align_threshold: config.align_threshold(),
        scs_k: config.scs_k.unwrap_or(10),
        min_frequency: config.min_frequency.unwrap_or(20),
    };
    let (report, miss_rows) = corpus_report(
        &corpus,
        &candidates,
        &lexicon,
        &patterns,
        sidecar.as_ref(),
        &report_config,
    )?;

    let report_json = serde_json::to_string_pretty(&report).expect("serializable report");
    write_output(&out, "report.json", &report_json)?;
    let mut csv = String::from("triplet,frequency,miss_rate\n");
    for row in &miss_rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            row.triplet, row.frequency, row.miss_rate
        ));
    }
    write_output(&out, "miss_rates.csv", &csv)
}
