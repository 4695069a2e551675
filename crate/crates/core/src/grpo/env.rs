//! Synthetic training environment: a fixed template vocabulary where every
//! template renders to one sentence over the bundled lexicon, plus per-prompt
//! references for the composite reward.

use std::collections::BTreeSet;

use crate::corpus::{parse_response, render_response};
use crate::extract::{extract_record, Entity, EntityType, Lexicon, PatternSet, RelationType, Triplet};
use crate::reward::{answer_reward, composite_reward, entity_reward, relation_reward, MatchMetric, RewardBreakdown, RewardWeights};

use super::policy::SampledSequence;

/// One renderable statement with its annotated extraction result.
#[derive(Debug, Clone)]
pub struct Template {
    pub text: String,
    pub entities: BTreeSet<Entity>,
    pub triplets: BTreeSet<Triplet>,
}

/// Reference annotations for one prompt.
#[derive(Debug, Clone)]
pub struct PromptSpec {
    pub reference_entities: BTreeSet<Entity>,
    pub reference_triplets: BTreeSet<Triplet>,
    pub reference_answer: usize,
}

#[derive(Debug, Clone)]
pub struct ToyEnvironment {
    pub templates: Vec<Template>,
    pub answer_vocab: Vec<String>,
    pub prompts: Vec<PromptSpec>,
    pub slots: usize,
    pub lexicon: Lexicon,
    pub patterns: PatternSet,
}

fn ent(name: &str, ty: EntityType) -> Entity {
    Entity::new(name, ty)
}

fn tri(head: Entity, relation: RelationType, tail: Entity) -> Triplet {
    Triplet::new(head, relation, tail).expect("no self-loops in template annotations")
}

fn template(text: &str, entities: Vec<Entity>, triplets: Vec<Triplet>) -> Template {
    Template {
        text: text.to_string(),
        entities: entities.into_iter().collect(),
        triplets: triplets.into_iter().collect(),
    }
}

impl ToyEnvironment {
    /// The bundled 4-prompt, 2-slot, 12-template environment. Template
    /// entity sets are pairwise disjoint so a uniformly random policy has
    /// low expected overlap with any prompt's references, leaving clear
    /// headroom for the entity/relation reward curves.
    pub fn bundled() -> Self {
        use EntityType::*;
        use RelationType::*;
        let templates = vec![
            template(
                "pleural effusion in the right lung",
                vec![ent("pleural effusion", Disorder), ent("right lung", Anatomy)],
                vec![tri(
                    ent("pleural effusion", Disorder),
                    LocatedAt,
                    ent("right lung", Anatomy),
                )],
            ),
            template(
                "opacity suggestive of pneumonia",
                vec![ent("opacity", Disorder), ent("pneumonia", Disorder)],
                vec![tri(ent("opacity", Disorder), SuggestiveOf, ent("pneumonia", Disorder))],
            ),
            template(
                "increased edema",
                vec![ent("increased", Concept), ent("edema", Disorder)],
                vec![tri(ent("increased", Concept), Modify, ent("edema", Disorder))],
            ),
            template(
                "pneumothorax in the left lung",
                vec![ent("pneumothorax", Disorder), ent("left lung", Anatomy)],
                vec![tri(
                    ent("pneumothorax", Disorder),
                    LocatedAt,
                    ent("left lung", Anatomy),
                )],
            ),
            template(
                "tube in the chest",
                vec![ent("tube", Device), ent("chest", Anatomy)],
                vec![tri(ent("tube", Device), LocatedAt, ent("chest", Anatomy))],
            ),
            template(
                "consolidation in the lung base",
                vec![ent("consolidation", Disorder), ent("lung base", Anatomy)],
                vec![tri(
                    ent("consolidation", Disorder),
                    LocatedAt,
                    ent("lung base", Anatomy),
                )],
            ),
            template(
                "clip over the neck",
                vec![ent("clip", Device), ent("neck", Anatomy)],
                vec![tri(ent("clip", Device), LocatedAt, ent("neck", Anatomy))],
            ),
            template(
                "blunting at the costophrenic angle",
                vec![ent("blunting", Disorder), ent("costophrenic angle", Anatomy)],
                vec![tri(
                    ent("blunting", Disorder),
                    LocatedAt,
                    ent("costophrenic angle", Anatomy),
                )],
            ),
            template(
                "enlarged cardiac silhouette",
                vec![ent("enlarged", Concept), ent("cardiac silhouette", Anatomy)],
                vec![tri(
                    ent("enlarged", Concept),
                    Modify,
                    ent("cardiac silhouette", Anatomy),
                )],
            ),
            template(
                "atelectasis in the lung",
                vec![ent("atelectasis", Disorder), ent("lung", Anatomy)],
                vec![tri(ent("atelectasis", Disorder), LocatedAt, ent("lung", Anatomy))],
            ),
            template(
                "fracture at the rib",
                vec![ent("fracture", Disorder), ent("rib", Anatomy)],
                vec![tri(ent("fracture", Disorder), LocatedAt, ent("rib", Anatomy))],
            ),
            template(
                "pacemaker within the mediastinum",
                vec![ent("pacemaker", Device), ent("mediastinum", Anatomy)],
                vec![tri(
                    ent("pacemaker", Device),
                    LocatedAt,
                    ent("mediastinum", Anatomy),
                )],
            ),
        ];
        let answer_vocab = vec![
            "yes".to_string(),
            "no".to_string(),
            "pneumonia".to_string(),
            "pleural effusion".to_string(),
        ];
        let prompt_refs: [(&[usize], usize); 4] =
            [(&[0, 1], 0), (&[2, 3], 1), (&[4, 5], 2), (&[6, 7], 3)];
        let prompts = prompt_refs
            .iter()
            .map(|(template_ids, answer)| {
                let mut reference_entities = BTreeSet::new();
                let mut reference_triplets = BTreeSet::new();
                for &t in *template_ids {
                    reference_entities.extend(templates[t].entities.iter().cloned());
                    reference_triplets.extend(templates[t].triplets.iter().cloned());
                }
                PromptSpec {
                    reference_entities,
                    reference_triplets,
                    reference_answer: *answer,
                }
            })
            .collect();
        ToyEnvironment {
            templates,
            answer_vocab,
            prompts,
            slots: 2,
            lexicon: Lexicon::default_asset(),
            patterns: PatternSet::default_asset(),
        }
    }

    /// Renders a sampled sequence into the tagged response format.
    pub fn render(&self, sequence: &SampledSequence) -> String {
        let think = sequence
            .templates
            .iter()
            .map(|&t| self.templates[t].text.as_str())
            .collect::<Vec<_>>()
            .join(". ");
        let answer = &self.answer_vocab[sequence.answer];
        render_response(&format!("{think}."), answer)
    }

    /// Renders, parses, extracts, and scores one sampled sequence against a
    /// prompt's references.
    pub fn score(
        &self,
        prompt: usize,
        sequence: &SampledSequence,
        weights: RewardWeights,
        metric: MatchMetric,
    ) -> RewardBreakdown {
        let raw = self.render(sequence);
        let (think, answer) = parse_response(&raw).expect("rendered responses are well-formed");
        let (entities, triplets) = extract_record(&think, &self.lexicon, &self.patterns);
        let spec = &self.prompts[prompt];
        let r_ans = answer_reward(&answer, &self.answer_vocab[spec.reference_answer]);
        let r_ent = entity_reward(&entities, &spec.reference_entities, metric);
        let r_rel = relation_reward(&triplets, &spec.reference_triplets, metric);
        composite_reward(r_ans, r_ent, r_rel, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rendering a template as its own single-sentence think block and
    /// re-extracting recovers its annotations exactly.
    #[test]
    fn template_extraction_round_trip() {
        let env = ToyEnvironment::bundled();
        for t in &env.templates {
            let (entities, triplets) = extract_record(&t.text, &env.lexicon, &env.patterns);
            assert_eq!(entities, t.entities, "entities for {:?}", t.text);
            assert_eq!(triplets, t.triplets, "triplets for {:?}", t.text);
        }
    }

    #[test]
    fn perfect_sequence_scores_full_reward() {
        let env = ToyEnvironment::bundled();
        let seq = SampledSequence {
            templates: vec![0, 1],
            answer: 0,
        };
        let b = env.score(0, &seq, RewardWeights::default(), MatchMetric::Jaccard);
        assert_eq!(b.r_ans, 1.0);
        assert_eq!(b.r_ent, 1.0);
        assert_eq!(b.r_rel, 1.0);
        assert_eq!(b.total, 2.0);
    }

    #[test]
    fn wrong_answer_and_partial_overlap() {
        let env = ToyEnvironment::bundled();
        let seq = SampledSequence {
            templates: vec![0, 0],
            answer: 1,
        };
        let b = env.score(0, &seq, RewardWeights::default(), MatchMetric::Jaccard);
        assert_eq!(b.r_ans, 0.0);
        assert!(b.r_ent > 0.0 && b.r_ent < 1.0);
        assert!(b.r_rel > 0.0 && b.r_rel < 1.0);
    }
}
