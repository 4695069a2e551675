//! Knowledge graph construction and reference-to-generated node alignment.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::extract::{Entity, Triplet};

pub const DEFAULT_ALIGN_THRESHOLD: f64 = 0.8;

/// Node set plus directed typed edges. Node order is insertion order so the
/// graph is deterministic given its input order.
#[derive(Debug, Clone, Default, Serialize)]
pub struct KnowledgeGraph {
    pub nodes: Vec<Entity>,
    pub edges: BTreeSet<Triplet>,
}

impl KnowledgeGraph {
    /// Builds a graph from triplets plus extra (possibly isolated) entities.
    pub fn build(triplets: &[Triplet], extra_entities: &[Entity]) -> Self {
        let mut graph = KnowledgeGraph::default();
        for t in triplets {
            graph.push_node(t.head.clone());
            graph.push_node(t.tail.clone());
            graph.edges.insert(t.clone());
        }
        for e in extra_entities {
            graph.push_node(e.clone());
        }
        graph
    }

    fn push_node(&mut self, entity: Entity) {
        if !self.nodes.contains(&entity) {
            self.nodes.push(entity);
        }
    }

    pub fn node_index(&self, entity: &Entity) -> Option<usize> {
        self.nodes.iter().position(|n| n == entity)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Binary label-blind adjacency: entry (i, j) = 1 iff any directed edge
    /// node_i -> node_j exists.
    pub fn adjacency(&self) -> Vec<Vec<u8>> {
        let n = self.nodes.len();
        let mut m = vec![vec![0u8; n]; n];
        for e in &self.edges {
            if let (Some(i), Some(j)) = (self.node_index(&e.head), self.node_index(&e.tail)) {
                m[i][j] = 1;
            }
        }
        m
    }

    /// In-degree plus out-degree over the binary adjacency.
    pub fn degree(&self, index: usize) -> usize {
        let adj = self.adjacency();
        let out: usize = adj[index].iter().map(|&v| v as usize).sum();
        let inn: usize = adj.iter().map(|row| row[index] as usize).sum();
        out + inn
    }
}

/// Lexical node similarity: 0 across types, token-level Jaccard of the
/// whitespace-split canonical texts otherwise.
pub fn node_similarity(a: &Entity, b: &Entity) -> f64 {
    if a.entity_type != b.entity_type {
        return 0.0;
    }
    let ta: BTreeSet<&str> = a.canonical.split_whitespace().collect();
    let tb: BTreeSet<&str> = b.canonical.split_whitespace().collect();
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    let inter = ta.intersection(&tb).count() as f64;
    let union = ta.union(&tb).count() as f64;
    inter / union
}

/// Partial map from reference node index to (generated node index, score).
#[derive(Debug, Clone)]
pub struct NodeAlignment {
    /// One slot per reference node, in reference node order.
    pub mapping: Vec<Option<(usize, f64)>>,
    pub threshold: f64,
    /// Best similarity per reference node regardless of the threshold
    /// (the s_i values node-coverage averaging uses).
    pub best_scores: Vec<f64>,
}

/// Maps each reference node to its most similar generated node. Ties break
/// by generated-node insertion order; a generated node may serve several
/// reference nodes. Nodes map only when the score clears the threshold.
pub fn align(reference: &KnowledgeGraph, generated: &KnowledgeGraph, threshold: f64) -> NodeAlignment {
    let mut mapping = Vec::with_capacity(reference.nodes.len());
    let mut best_scores = Vec::with_capacity(reference.nodes.len());
    for ref_node in &reference.nodes {
        let mut best: Option<(usize, f64)> = None;
        for (j, gen_node) in generated.nodes.iter().enumerate() {
            let s = node_similarity(ref_node, gen_node);
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((j, s));
            }
        }
        best_scores.push(best.map_or(0.0, |(_, s)| s));
        mapping.push(best.filter(|&(_, s)| s >= threshold));
    }
    NodeAlignment {
        mapping,
        threshold,
        best_scores,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{EntityType, RelationType};

    fn ent(name: &str, ty: EntityType) -> Entity {
        Entity::new(name, ty)
    }

    fn tri(h: &Entity, r: RelationType, t: &Entity) -> Triplet {
        Triplet::new(h.clone(), r, t.clone()).unwrap()
    }

    #[test]
    fn build_graph_cases() {
        assert!(KnowledgeGraph::build(&[], &[]).is_empty());

        let a = ent("a", EntityType::Disorder);
        let b = ent("b", EntityType::Anatomy);
        let g = KnowledgeGraph::build(&[tri(&a, RelationType::LocatedAt, &b)], &[]);
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);

        let c = ent("c", EntityType::Concept);
        let g = KnowledgeGraph::build(&[tri(&a, RelationType::LocatedAt, &b)], std::slice::from_ref(&c));
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.degree(g.node_index(&c).unwrap()), 0);
    }

    #[test]
    fn build_graph_idempotent_under_self_union() {
        let a = ent("a", EntityType::Disorder);
        let b = ent("b", EntityType::Anatomy);
        let edges = vec![tri(&a, RelationType::LocatedAt, &b)];
        let doubled: Vec<Triplet> = edges.iter().chain(edges.iter()).cloned().collect();
        let g1 = KnowledgeGraph::build(&edges, &[]);
        let g2 = KnowledgeGraph::build(&doubled, &[]);
        assert_eq!(g1.nodes, g2.nodes);
        assert_eq!(g1.edges, g2.edges);
    }

    #[test]
    fn node_similarity_cases() {
        let pe = ent("pleural effusion", EntityType::Disorder);
        assert_eq!(node_similarity(&pe, &pe), 1.0);
        let left = ent("left lung", EntityType::Anatomy);
        let lung = ent("lung", EntityType::Anatomy);
        assert_eq!(node_similarity(&left, &lung), 0.5);
        let lung_d = ent("lung", EntityType::Disorder);
        assert_eq!(node_similarity(&lung, &lung_d), 0.0);
    }

    #[test]
    fn align_identity() {
        let a = ent("a", EntityType::Disorder);
        let b = ent("b", EntityType::Anatomy);
        let g = KnowledgeGraph::build(&[tri(&a, RelationType::LocatedAt, &b)], &[]);
        let alignment = align(&g, &g, 1.0);
        for (i, slot) in alignment.mapping.iter().enumerate() {
            assert_eq!(*slot, Some((i, 1.0)));
        }
    }

    #[test]
    fn align_empty_generated() {
        let a = ent("a", EntityType::Disorder);
        let g = KnowledgeGraph::build(&[], &[a]);
        let alignment = align(&g, &KnowledgeGraph::default(), 0.5);
        assert_eq!(alignment.mapping, vec![None]);
        assert_eq!(alignment.best_scores, vec![0.0]);
    }

    #[test]
    fn align_tie_breaks_by_insertion_order() {
        let lung = ent("lung", EntityType::Anatomy);
        let reference = KnowledgeGraph::build(&[], &[lung]);
        let generated = KnowledgeGraph::build(
            &[],
            &[
                ent("left lung", EntityType::Anatomy),
                ent("lung base", EntityType::Anatomy),
            ],
        );
        let alignment = align(&reference, &generated, 0.4);
        assert_eq!(alignment.mapping[0], Some((0, 0.5)));
    }
}
