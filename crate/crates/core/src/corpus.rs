//! Record data model, tagged-response parsing, answer normalization, and
//! JSONL corpus I/O.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    Basic,
    Region,
    Compare,
}

/// The ten question categories of the QA corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuestionType {
    Presence,
    Anatomy,
    Attribute,
    Abnormality,
    Size,
    Plane,
    Gender,
    Severity,
    Type,
    Difference,
}

impl QuestionType {
    pub const ALL: [QuestionType; 10] = [
        QuestionType::Presence,
        QuestionType::Anatomy,
        QuestionType::Attribute,
        QuestionType::Abnormality,
        QuestionType::Size,
        QuestionType::Plane,
        QuestionType::Gender,
        QuestionType::Severity,
        QuestionType::Type,
        QuestionType::Difference,
    ];
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnswerType {
    Open,
    Closed,
}

impl fmt::Display for AnswerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One question with its reference reasoning and answer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QARecord {
    pub id: String,
    pub task: Task,
    pub question_type: QuestionType,
    pub answer_type: AnswerType,
    pub question: String,
    pub reference_think: String,
    pub reference_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emb_q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emb_t: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emb_v: Option<Vec<f64>>,
}

/// A model response to one record, raw plus its parsed tag spans.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub record_id: String,
    pub raw: String,
    #[serde(skip)]
    pub think: String,
    #[serde(skip)]
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_token_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_logprob: Option<f64>,
}

/// Extracts the first tag-delimited span, trimmed.
fn tag_span<'a>(raw: &'a str, tag: &str) -> Result<Option<&'a str>> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let close_pos = raw.find(&close);
    match raw.find(&open) {
        None => match close_pos {
            // closing tag with no opening tag at all
            Some(_) => Err(Error::MalformedNesting(tag.to_string())),
            None => Ok(None),
        },
        Some(start) => {
            let body_start = start + open.len();
            match raw[body_start..].find(&close) {
                Some(rel) => {
                    if close_pos.unwrap() < start {
                        return Err(Error::MalformedNesting(tag.to_string()));
                    }
                    Ok(Some(raw[body_start..body_start + rel].trim()))
                }
                None => match close_pos {
                    Some(p) if p < start => Err(Error::MalformedNesting(tag.to_string())),
                    _ => Ok(None),
                },
            }
        }
    }
}

/// Splits a raw response into its first `<think>` and `<answer>` blocks.
pub fn parse_response(raw: &str) -> Result<(String, String)> {
    let think = tag_span(raw, "think")?.ok_or(Error::MissingThinkTag)?;
    let answer = tag_span(raw, "answer")?.ok_or(Error::MissingAnswerTag)?;
    Ok((think.to_string(), answer.to_string()))
}

/// Renders a (think, answer) pair back into the tagged response format.
pub fn render_response(think: &str, answer: &str) -> String {
    format!("<think>{think}</think><answer>{answer}</answer>")
}

/// Canonical answer value: a scalar string or a comma-list treated as a set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NormalizedAnswer {
    Scalar(String),
    Set(BTreeSet<String>),
}

fn normalize_scalar(s: &str) -> String {
    let lowered = s.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(['.', ',', ';'])
        .trim_end()
        .to_string()
}

/// Canonicalizes an answer for strict string matching: lowercase, collapse
/// whitespace, strip terminal punctuation, and treat comma lists as sets.
pub fn normalize_answer(answer: &str) -> NormalizedAnswer {
    let scalar = normalize_scalar(answer);
    if scalar.contains(',') {
        let items: BTreeSet<String> = scalar
            .split(',')
            .map(normalize_scalar)
            .filter(|s| !s.is_empty())
            .collect();
        NormalizedAnswer::Set(items)
    } else {
        NormalizedAnswer::Scalar(scalar)
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        if !line.trim().is_empty() {
            lines.push(line);
        } else {
            // keep positions aligned with file line numbers
            lines.push(String::new());
        }
        let _ = idx;
    }
    Ok(lines)
}

/// Loads a QARecord JSONL corpus, enforcing unique ids and per-modality
/// embedding dimensions.
pub fn load_corpus(path: &Path) -> Result<Vec<QARecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut dims: HashMap<&'static str, usize> = HashMap::new();
    for (idx, line) in read_lines(path)?.into_iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let record: QARecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if record.id.is_empty() {
            return Err(Error::Parse {
                line: idx + 1,
                reason: "empty id".to_string(),
            });
        }
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        for (modality, emb) in [
            ("Q", &record.emb_q),
            ("T", &record.emb_t),
            ("V", &record.emb_v),
        ] {
            if let Some(v) = emb {
                let dim = dims.entry(modality).or_insert(v.len());
                if *dim != v.len() {
                    return Err(Error::DimensionMismatch {
                        modality: modality.to_string(),
                        a: *dim,
                        b: v.len(),
                    });
                }
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Loads candidate responses, parsing each raw response into tag spans.
pub fn load_candidates(path: &Path) -> Result<Vec<CandidateResponse>> {
    let mut candidates = Vec::new();
    for (idx, line) in read_lines(path)?.into_iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut candidate: CandidateResponse =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        let (think, answer) = parse_response(&candidate.raw).map_err(|e| Error::Parse {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if let Some(lps) = &candidate.answer_token_logprobs {
            if lps.iter().any(|&lp| lp > 0.0) {
                return Err(Error::Parse {
                    line: idx + 1,
                    reason: "answer_token_logprobs must be <= 0".to_string(),
                });
            }
        }
        candidate.think = think;
        candidate.answer = answer;
        candidates.push(candidate);
    }
    Ok(candidates)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_basic() {
        let (t, a) = parse_response("<think>lungs clear</think><answer>no</answer>").unwrap();
        assert_eq!(t, "lungs clear");
        assert_eq!(a, "no");
    }

    #[test]
    fn parse_first_block_wins() {
        let (t, a) =
            parse_response("<think>a</think><answer>yes</answer><answer>no</answer>").unwrap();
        assert_eq!(t, "a");
        assert_eq!(a, "yes");
    }

    #[test]
    fn parse_missing_tags() {
        assert!(matches!(
            parse_response("<answer>yes</answer>"),
            Err(Error::MissingThinkTag)
        ));
        assert!(matches!(
            parse_response("<think>a</think>"),
            Err(Error::MissingAnswerTag)
        ));
    }

    #[test]
    fn parse_malformed_nesting() {
        assert!(matches!(
            parse_response("</think>a<think><answer>x</answer>"),
            Err(Error::MalformedNesting(_))
        ));
    }

    #[test]
    fn parse_trims_whitespace() {
        let (t, a) = parse_response("<think>  a b  </think><answer>\nyes\n</answer>").unwrap();
        assert_eq!(t, "a b");
        assert_eq!(a, "yes");
    }

    #[test]
    fn render_round_trip() {
        let (t, a) = parse_response(&render_response("effusion seen", "yes")).unwrap();
        assert_eq!(t, "effusion seen");
        assert_eq!(a, "yes");
    }

    #[test]
    fn normalize_scalar_cases() {
        assert_eq!(
            normalize_answer("Yes."),
            NormalizedAnswer::Scalar("yes".to_string())
        );
        assert_eq!(
            normalize_answer(""),
            NormalizedAnswer::Scalar(String::new())
        );
        assert_eq!(
            normalize_answer("  AP   Projection ;"),
            NormalizedAnswer::Scalar("ap projection".to_string())
        );
    }

    #[test]
    fn normalize_list_to_set() {
        let expected: BTreeSet<String> = ["left lung", "right lung"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(
            normalize_answer("left lung, Right Lung"),
            NormalizedAnswer::Set(expected.clone())
        );
        // order-insensitive
        assert_eq!(
            normalize_answer("Right Lung,left lung"),
            NormalizedAnswer::Set(expected)
        );
    }

    #[test]
    fn normalize_idempotent() {
        for raw in ["Yes.", "a, B, c", "", "AP projection", "x,,y"] {
            let once = normalize_answer(raw);
            let twice = match &once {
                NormalizedAnswer::Scalar(s) => normalize_answer(s),
                NormalizedAnswer::Set(items) => {
                    let joined = items.iter().cloned().collect::<Vec<_>>().join(", ");
                    normalize_answer(&joined)
                }
            };
            assert_eq!(once, twice, "not idempotent for {raw:?}");
        }
    }

    #[test]
    fn load_corpus_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let good = r#"{"id":"r1","task":"Basic","question_type":"Presence","answer_type":"Closed","question":"q","reference_think":"t","reference_answer":"yes"}"#;
        std::fs::write(&path, format!("{good}\nnot json\n")).unwrap();
        match load_corpus(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }

        std::fs::write(&path, format!("{good}\n{good}\n")).unwrap();
        assert!(matches!(load_corpus(&path), Err(Error::DuplicateId(_))));

        let other_id = good.replace("\"id\":\"r1\"", "\"id\":\"r2\"");
        std::fs::write(&path, format!("{good}\n{other_id}\n")).unwrap();
        assert_eq!(load_corpus(&path).unwrap().len(), 2);
    }

    #[test]
    fn load_corpus_embedding_dims_must_agree() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let a = r#"{"id":"r1","task":"Basic","question_type":"Presence","answer_type":"Closed","question":"q","reference_think":"t","reference_answer":"yes","emb_q":[1.0,0.0]}"#;
        let b = r#"{"id":"r2","task":"Basic","question_type":"Presence","answer_type":"Closed","question":"q","reference_think":"t","reference_answer":"yes","emb_q":[1.0,0.0,0.0]}"#;
        std::fs::write(&path, format!("{a}\n{b}\n")).unwrap();
        assert!(matches!(
            load_corpus(&path),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn load_candidates_parses_spans() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("candidates.jsonl");
        std::fs::write(
            &path,
            r#"{"record_id":"r1","raw":"<think>a</think><answer>yes</answer>","answer_token_logprobs":[-0.1]}"#,
        )
        .unwrap();
        let cands = load_candidates(&path).unwrap();
        assert_eq!(cands[0].think, "a");
        assert_eq!(cands[0].answer, "yes");
    }

    #[test]
    fn load_candidates_rejects_positive_logprobs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("candidates.jsonl");
        std::fs::write(
            &path,
            r#"{"record_id":"r1","raw":"<think>a</think><answer>yes</answer>","answer_token_logprobs":[0.5]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_candidates(&path),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
