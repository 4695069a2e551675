//! Deterministic entity and relation extraction over reasoning text.
//!
//! A gazetteer lexicon provides entity mentions (longest match wins, left to
//! right, word boundaries only) and a small pattern set links adjacent
//! mentions into directed triplets. Externally produced triplets can also be
//! ingested from a sidecar file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Extraction;

/// The six entity categories of the radiology schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    Anatomy,
    Disorder,
    Concept,
    Device,
    Procedure,
    Size,
}

impl EntityType {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "Anatomy" => Ok(EntityType::Anatomy),
            "Disorder" => Ok(EntityType::Disorder),
            "Concept" => Ok(EntityType::Concept),
            "Device" => Ok(EntityType::Device),
            "Procedure" => Ok(EntityType::Procedure),
            "Size" => Ok(EntityType::Size),
            other => Err(Error::UnknownEntityType(other.to_string())),
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// A canonicalized entity mention. Equality is (canonical, type).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub canonical: String,
    #[serde(rename = "type")]
    pub entity_type: EntityType,
}

impl Entity {
    pub fn new(canonical: impl Into<String>, entity_type: EntityType) -> Self {
        let canonical: String = canonical.into();
        let canonical = canonical
            .to_lowercase()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        Entity {
            canonical,
            entity_type,
        }
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.canonical, self.entity_type)
    }
}

/// The three directed relation categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationType {
    LocatedAt,
    SuggestiveOf,
    Modify,
}

impl RelationType {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "LocatedAt" | "located_at" => Ok(RelationType::LocatedAt),
            "SuggestiveOf" | "suggestive_of" => Ok(RelationType::SuggestiveOf),
            "Modify" | "modify" => Ok(RelationType::Modify),
            other => Err(Error::UnknownRelationType(other.to_string())),
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Directed (head, relation, tail) unit of structured reasoning.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub head: Entity,
    pub relation: RelationType,
    pub tail: Entity,
}

impl Triplet {
    /// Returns None for self-loops.
    pub fn new(head: Entity, relation: RelationType, tail: Entity) -> Option<Self> {
        if head == tail {
            return None;
        }
        Some(Triplet {
            head,
            relation,
            tail,
        })
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}|{}|{}",
            self.head.canonical, self.relation, self.tail.canonical
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
struct LexiconEntry {
    surface: String,
    canonical: String,
    #[serde(rename = "type")]
    entity_type: String,
}

/// Surface phrase -> (canonical, type) gazetteer.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    /// Keyed by normalized surface token sequence.
    entries: BTreeMap<Vec<String>, (String, EntityType)>,
    max_words: usize,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        surface: &str,
        canonical: &str,
        entity_type: EntityType,
    ) -> Result<()> {
        let tokens = tokenize_words(surface);
        if tokens.is_empty() {
            return Err(Error::Config(format!("empty lexicon surface {surface:?}")));
        }
        if self.entries.contains_key(&tokens) {
            return Err(Error::Config(format!(
                "duplicate lexicon surface {surface:?}"
            )));
        }
        self.max_words = self.max_words.max(tokens.len());
        self.entries
            .insert(tokens, (canonical.to_lowercase(), entity_type));
        Ok(())
    }

    pub fn from_jsonl_str(content: &str) -> Result<Self> {
        let mut lexicon = Lexicon::new();
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: LexiconEntry = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            let entity_type = EntityType::parse(&entry.entity_type)?;
            lexicon.insert(&entry.surface, &entry.canonical, entity_type)?;
        }
        Ok(lexicon)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl_str(&content)
    }

    /// Bundled default lexicon covering the common radiology vocabulary.
    pub fn default_asset() -> Self {
        Self::from_jsonl_str(include_str!("../data/lexicon.jsonl"))
            .expect("bundled lexicon is valid")
    }

    /// Looks up a token n-gram, folding a trailing plural `s` on the last
    /// word when only the singular form is present.
    fn lookup(&self, tokens: &[String]) -> Option<(String, EntityType)> {
        if let Some((canonical, ty)) = self.entries.get(tokens) {
            return Some((canonical.clone(), *ty));
        }
        let last = tokens.last()?;
        if let Some(singular) = last.strip_suffix('s') {
            if !singular.is_empty() {
                let mut folded: Vec<String> = tokens.to_vec();
                *folded.last_mut().unwrap() = singular.to_string();
                if let Some((canonical, ty)) = self.entries.get(&folded) {
                    return Some((canonical.clone(), *ty));
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternDirection {
    /// Head entity appears before the trigger, tail after.
    HeadFirst,
    /// Tail entity appears before the trigger, head after.
    TailFirst,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Pattern {
    pub trigger: String,
    #[serde(deserialize_with = "relation_from_str")]
    pub relation: RelationType,
    pub direction: PatternDirection,
    #[serde(default, deserialize_with = "entity_type_from_opt_str")]
    pub head_type: Option<EntityType>,
    #[serde(default, deserialize_with = "entity_type_from_opt_str")]
    pub tail_type: Option<EntityType>,
}

fn relation_from_str<'de, D>(deserializer: D) -> std::result::Result<RelationType, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let s = String::deserialize(deserializer)?;
    RelationType::parse(&s).map_err(serde::de::Error::custom)
}

fn entity_type_from_opt_str<'de, D>(
    deserializer: D,
) -> std::result::Result<Option<EntityType>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let s: Option<String> = Option::deserialize(deserializer)?;
    match s {
        None => Ok(None),
        Some(s) => EntityType::parse(&s)
            .map(Some)
            .map_err(serde::de::Error::custom),
    }
}

/// Ordered trigger patterns; first match wins per mention pair.
#[derive(Debug, Clone, Default)]
pub struct PatternSet {
    patterns: Vec<Pattern>,
}

impl PatternSet {
    pub fn from_jsonl_str(content: &str) -> Result<Self> {
        let mut patterns = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let pattern: Pattern = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            if pattern.trigger.trim().is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    reason: "empty trigger".to_string(),
                });
            }
            patterns.push(pattern);
        }
        Ok(PatternSet { patterns })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl_str(&content)
    }

    pub fn default_asset() -> Self {
        Self::from_jsonl_str(include_str!("../data/patterns.jsonl"))
            .expect("bundled patterns are valid")
    }
}

/// Words are lowercase alphanumeric runs; internal hyphens are kept so that
/// "x-ray" stays one token.
fn tokenize_words(text: &str) -> Vec<String> {
    tokenize_with_spans(text).into_iter().map(|(w, _)| w).collect()
}

fn tokenize_with_spans(text: &str) -> Vec<(String, usize)> {
    let lower = text.to_lowercase();
    let bytes = lower.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_alphanumeric() {
            let start = i;
            while i < bytes.len() {
                let c = bytes[i] as char;
                if c.is_ascii_alphanumeric()
                    || (c == '-'
                        && i + 1 < bytes.len()
                        && (bytes[i + 1] as char).is_ascii_alphanumeric())
                {
                    i += 1;
                } else {
                    break;
                }
            }
            tokens.push((lower[start..i].to_string(), start));
        } else {
            i += 1;
        }
    }
    tokens
}

/// A matched entity mention with its token span.
#[derive(Debug, Clone)]
struct Mention {
    entity: Entity,
    token_start: usize,
    token_end: usize, // exclusive
}

fn scan_mentions(tokens: &[(String, usize)], lexicon: &Lexicon) -> Vec<Mention> {
    let words: Vec<String> = tokens.iter().map(|(w, _)| w.clone()).collect();
    let mut mentions = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let max_len = lexicon.max_words.min(words.len() - i);
        let mut matched = false;
        for len in (1..=max_len).rev() {
            if let Some((canonical, ty)) = lexicon.lookup(&words[i..i + len]) {
                mentions.push(Mention {
                    entity: Entity::new(canonical, ty),
                    token_start: i,
                    token_end: i + len,
                });
                i += len;
                matched = true;
                break;
            }
        }
        if !matched {
            i += 1;
        }
    }
    mentions
}

/// Scans text for lexicon entities: lowercased, longest match wins,
/// non-overlapping, word boundaries only.
pub fn extract_entities(text: &str, lexicon: &Lexicon) -> BTreeSet<Entity> {
    let tokens = tokenize_with_spans(text);
    scan_mentions(&tokens, lexicon)
        .into_iter()
        .map(|m| m.entity)
        .collect()
}

fn split_sentences(text: &str) -> Vec<&str> {
    text.split(['.', '!', '?'])
        .filter(|s| !s.trim().is_empty())
        .collect()
}

/// Links entity mentions within each sentence into directed triplets.
///
/// Trigger patterns fire on the gap between two adjacent mentions; a Concept
/// mention directly followed by another mention with no words between them
/// emits a Modify triplet.
pub fn extract_relations(
    text: &str,
    entities: &BTreeSet<Entity>,
    patterns: &PatternSet,
    lexicon: &Lexicon,
) -> BTreeSet<Triplet> {
    let mut triplets = BTreeSet::new();
    for sentence in split_sentences(text) {
        let tokens = tokenize_with_spans(sentence);
        let words: Vec<&str> = tokens.iter().map(|(w, _)| w.as_str()).collect();
        let mentions: Vec<Mention> = scan_mentions(&tokens, lexicon)
            .into_iter()
            .filter(|m| entities.contains(&m.entity))
            .collect();
        for pair in mentions.windows(2) {
            let (left, right) = (&pair[0], &pair[1]);
            let gap = &words[left.token_end..right.token_start];
            let mut fired = false;
            for pattern in &patterns.patterns {
                let trigger: Vec<String> = tokenize_words(&pattern.trigger);
                if !contains_subsequence(gap, &trigger) {
                    continue;
                }
                let (head, tail) = match pattern.direction {
                    PatternDirection::HeadFirst => (&left.entity, &right.entity),
                    PatternDirection::TailFirst => (&right.entity, &left.entity),
                };
                if let Some(ty) = pattern.head_type {
                    if head.entity_type != ty {
                        continue;
                    }
                }
                if let Some(ty) = pattern.tail_type {
                    if tail.entity_type != ty {
                        continue;
                    }
                }
                if let Some(t) = Triplet::new(head.clone(), pattern.relation, tail.clone()) {
                    triplets.insert(t);
                    fired = true;
                    break;
                }
            }
            // implicit Modify: a Concept immediately preceding another mention
            if !fired
                && gap.is_empty()
                && left.entity.entity_type == EntityType::Concept
                && left.entity != right.entity
            {
                if let Some(t) = Triplet::new(
                    left.entity.clone(),
                    RelationType::Modify,
                    right.entity.clone(),
                ) {
                    triplets.insert(t);
                }
            }
        }
    }
    triplets
}

fn contains_subsequence(haystack: &[&str], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack
        .windows(needle.len())
        .any(|w| w.iter().zip(needle).all(|(a, b)| *a == b))
}

/// Entities and triplets for one record, extracted in one pass.
pub fn extract_record(
    text: &str,
    lexicon: &Lexicon,
    patterns: &PatternSet,
) -> (BTreeSet<Entity>, BTreeSet<Triplet>) {
    let entities = extract_entities(text, lexicon);
    let triplets = extract_relations(text, &entities, patterns, lexicon);
    (entities, triplets)
}

#[derive(Debug, Deserialize)]
struct SidecarEntity {
    text: String,
    #[serde(rename = "type")]
    entity_type: String,
}

#[derive(Debug, Deserialize)]
struct SidecarTriplet {
    head: String,
    relation: String,
    tail: String,
}

#[derive(Debug, Deserialize)]
struct SidecarRecord {
    id: String,
    entities: Vec<SidecarEntity>,
    triplets: Vec<SidecarTriplet>,
}

/// Loads externally produced extraction results keyed by record id.
///
/// Triplet head/tail fields reference canonical entity texts from the same
/// record's entity list.
pub fn load_sidecar_triplets(path: &Path) -> Result<BTreeMap<String, Extraction>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SidecarRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        let mut entities = BTreeSet::new();
        let mut by_text: BTreeMap<String, Entity> = BTreeMap::new();
        for e in &record.entities {
            let ty = EntityType::parse(&e.entity_type)?;
            let entity = Entity::new(e.text.clone(), ty);
            by_text
                .entry(entity.canonical.clone())
                .or_insert_with(|| entity.clone());
            entities.insert(entity);
        }
        let mut triplets = BTreeSet::new();
        for t in &record.triplets {
            let relation = RelationType::parse(&t.relation)?;
            let resolve = |text: &str| -> Result<Entity> {
                let key = Entity::new(text, EntityType::Anatomy).canonical;
                by_text.get(&key).cloned().ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    reason: format!("triplet endpoint {text:?} not in entity list"),
                })
            };
            let head = resolve(&t.head)?;
            let tail = resolve(&t.tail)?;
            let triplet = Triplet::new(head, relation, tail).ok_or_else(|| Error::Parse {
                line: idx + 1,
                reason: format!("self-loop triplet on {:?}", t.head),
            })?;
            triplets.insert(triplet);
        }
        if out.contains_key(&record.id) {
            return Err(Error::DuplicateId(record.id));
        }
        out.insert(record.id, (entities, triplets));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_lexicon() -> Lexicon {
        let mut lex = Lexicon::new();
        lex.insert("pleural effusion", "pleural effusion", EntityType::Disorder)
            .unwrap();
        lex.insert("right lung", "right lung", EntityType::Anatomy)
            .unwrap();
        lex.insert("increased", "increased", EntityType::Concept)
            .unwrap();
        lex.insert("opacity", "opacity", EntityType::Disorder).unwrap();
        lex.insert("pneumonia", "pneumonia", EntityType::Disorder)
            .unwrap();
        lex
    }

    fn toy_patterns() -> PatternSet {
        PatternSet::from_jsonl_str(concat!(
            r#"{"trigger":"in the","relation":"LocatedAt","direction":"head_first","head_type":"Disorder","tail_type":"Anatomy"}"#,
            "\n",
            r#"{"trigger":"suggestive of","relation":"SuggestiveOf","direction":"head_first"}"#,
        ))
        .unwrap()
    }

    #[test]
    fn entities_longest_match() {
        let lex = toy_lexicon();
        let got = extract_entities("Increased pleural effusion in the right lung.", &lex);
        let want: BTreeSet<Entity> = [
            Entity::new("increased", EntityType::Concept),
            Entity::new("pleural effusion", EntityType::Disorder),
            Entity::new("right lung", EntityType::Anatomy),
        ]
        .into_iter()
        .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn longest_match_beats_substring() {
        let mut lex = Lexicon::new();
        lex.insert("lung", "lung", EntityType::Anatomy).unwrap();
        lex.insert("lung base", "lung base", EntityType::Anatomy)
            .unwrap();
        let got = extract_entities("the lung base", &lex);
        assert_eq!(got.len(), 1);
        assert!(got.contains(&Entity::new("lung base", EntityType::Anatomy)));
    }

    #[test]
    fn empty_text_empty_set() {
        assert!(extract_entities("", &toy_lexicon()).is_empty());
    }

    #[test]
    fn plural_folding() {
        let mut lex = Lexicon::new();
        lex.insert("effusion", "effusion", EntityType::Disorder)
            .unwrap();
        let got = extract_entities("bilateral effusions", &lex);
        assert!(got.contains(&Entity::new("effusion", EntityType::Disorder)));
        // no folding when the singular is absent from the lexicon
        let got = extract_entities("atelectasis findings", &lex);
        assert!(got.is_empty());
    }

    #[test]
    fn relation_located_at() {
        let lex = toy_lexicon();
        let text = "pleural effusion in the right lung";
        let (entities, triplets) = extract_record(text, &lex, &toy_patterns());
        assert_eq!(entities.len(), 2);
        let want = Triplet::new(
            Entity::new("pleural effusion", EntityType::Disorder),
            RelationType::LocatedAt,
            Entity::new("right lung", EntityType::Anatomy),
        )
        .unwrap();
        assert_eq!(triplets, [want].into_iter().collect());
    }

    #[test]
    fn relation_suggestive_of() {
        let lex = toy_lexicon();
        let (_, triplets) = extract_record("opacity suggestive of pneumonia", &lex, &toy_patterns());
        let want = Triplet::new(
            Entity::new("opacity", EntityType::Disorder),
            RelationType::SuggestiveOf,
            Entity::new("pneumonia", EntityType::Disorder),
        )
        .unwrap();
        assert_eq!(triplets, [want].into_iter().collect());
    }

    #[test]
    fn relation_implicit_modify() {
        let lex = toy_lexicon();
        let (_, triplets) = extract_record("increased opacity", &lex, &toy_patterns());
        let want = Triplet::new(
            Entity::new("increased", EntityType::Concept),
            RelationType::Modify,
            Entity::new("opacity", EntityType::Disorder),
        )
        .unwrap();
        assert_eq!(triplets, [want].into_iter().collect());
    }

    #[test]
    fn relations_stay_within_sentence() {
        let lex = toy_lexicon();
        let (_, triplets) =
            extract_record("pleural effusion is seen. in the right lung", &lex, &toy_patterns());
        assert!(triplets.is_empty());
    }

    #[test]
    fn extraction_never_invents_entities() {
        let lex = toy_lexicon();
        let text = "increased pleural effusion in the right lung suggestive of pneumonia";
        let (entities, triplets) = extract_record(text, &lex, &toy_patterns());
        for t in &triplets {
            assert!(entities.contains(&t.head));
            assert!(entities.contains(&t.tail));
        }
    }

    #[test]
    fn unused_lexicon_entry_is_inert() {
        let mut lex = toy_lexicon();
        let text = "pleural effusion in the right lung";
        let before = extract_record(text, &lex, &toy_patterns());
        lex.insert("cardiomegaly", "cardiomegaly", EntityType::Disorder)
            .unwrap();
        let after = extract_record(text, &lex, &toy_patterns());
        assert_eq!(before, after);
    }

    #[test]
    fn sidecar_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sidecar.jsonl");
        std::fs::write(
            &path,
            r#"{"id":"r1","entities":[{"text":"carina","type":"Anatomy"}],"triplets":[]}"#,
        )
        .unwrap();
        let got = load_sidecar_triplets(&path).unwrap();
        let (entities, triplets) = &got["r1"];
        assert_eq!(entities.len(), 1);
        assert!(triplets.is_empty());

        std::fs::write(
            &path,
            r#"{"id":"r1","entities":[{"text":"carina","type":"Finding"}],"triplets":[]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_sidecar_triplets(&path),
            Err(Error::UnknownEntityType(_))
        ));

        std::fs::write(
            &path,
            r#"{"id":"r1","entities":[{"text":"carina","type":"Anatomy"}],"triplets":[{"head":"carina","relation":"LocatedAt","tail":"carina"}]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_sidecar_triplets(&path),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn bundled_assets_load() {
        let lex = Lexicon::default_asset();
        let patterns = PatternSet::default_asset();
        let (entities, triplets) =
            extract_record("increased opacity in the left lung", &lex, &patterns);
        assert!(!entities.is_empty());
        assert!(!triplets.is_empty());
    }
}
