//! Triplet parsing, knowledge-graph mapping and knowledge-source comparison.

mod llm;
mod overlap;
mod parse;

pub use llm::{CassetteLlm, Interaction, LlmClient, LlmRequest, LlmResponse, RecordingLlm};
pub use overlap::{overlap_report, OverlapCell, OverlapReport, CELL_NAMES, MAX_CELL_EXAMPLES};
pub use parse::{analyze, entity_pairs, main_verbs, noun_heads, parse_triplet, tag_tokens, ParsedPhrase, PhraseAnalysis, Tag};

use crate::adapter::AdapterError;
use crate::corpus::normalize_name;
use crate::diversify::KnowledgeSourceAdapter;
use crate::generator::{pair_similarity, SimilarityAdapter, SimilarityError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default relation-similarity threshold for KG mapping and comparison.
pub const KG_MATCH_THRESHOLD: f64 = 0.75;

/// Returned as `best_similarity` when no edge could be compared.
pub const NO_SIMILARITY: f64 = -1.0;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("triplet has an empty {0}")]
    EmptyField(&'static str),
    #[error("at least one subject or object entity is required")]
    NoEntities,
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: String,
    pub relation: String,
    pub object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Triplet {
    /// Normalizing constructor; all three fields must be non-empty.
    pub fn new(subject: &str, relation: &str, object: &str) -> Result<Self, KgError> {
        let t = Triplet {
            subject: normalize_name(subject),
            relation: normalize_name(relation),
            object: normalize_name(object),
            source: None,
        };
        for (name, v) in [("subject", &t.subject), ("relation", &t.relation), ("object", &t.object)] {
            if v.is_empty() {
                return Err(KgError::EmptyField(name));
            }
        }
        Ok(t)
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    /// `(subject, relation, object)` without the source.
    pub fn key(&self) -> (&str, &str, &str) {
        (&self.subject, &self.relation, &self.object)
    }

    pub fn render(&self) -> String {
        format!("{} {} {}", self.subject, self.relation, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingResult {
    pub triplet: Triplet,
    pub matched: bool,
    pub best_similarity: f64,
    pub matched_edge: Option<(String, f64)>,
}

/// Map a triplet onto the graph: exact node lookup for both endpoints, then
/// the most similar relation among edges joining them (either direction).
/// Matching uses `>=` against `threshold`.
pub fn map_to_kg(
    triplet: &Triplet,
    kg: &dyn KnowledgeSourceAdapter,
    sim: &dyn SimilarityAdapter,
    threshold: f64,
) -> Result<MappingResult, KgError> {
    let unmatched = || MappingResult {
        triplet: triplet.clone(),
        matched: false,
        best_similarity: NO_SIMILARITY,
        matched_edge: None,
    };
    if !kg.has_node(&triplet.subject)? || !kg.has_node(&triplet.object)? {
        return Ok(unmatched());
    }
    let forward = kg.edges(&triplet.subject)?.into_iter().filter(|e| e.target == triplet.object);
    let backward = kg.edges(&triplet.object)?.into_iter().filter(|e| e.target == triplet.subject);
    let mut best: Option<(f64, String, f64)> = None;
    for edge in forward.chain(backward) {
        let s = if edge.relation == triplet.relation {
            1.0
        } else {
            pair_similarity(&triplet.relation, &edge.relation, sim)?
        };
        if best.as_ref().is_none_or(|(b, _, _)| s > *b) {
            best = Some((s, edge.relation, edge.weight));
        }
    }
    Ok(match best {
        None => unmatched(),
        Some((s, rel, w)) => MappingResult {
            triplet: triplet.clone(),
            matched: s >= threshold,
            best_similarity: s,
            matched_edge: Some((rel, w)),
        },
    })
}

const PROMPT_HEAD: &str =
    "Suppose you are looking at an image that contains the following subject and object entities:";
const PROMPT_INSTRUCTION: &str = "Please extract 5-10 condensed descriptions that describe the interactions and/or relations among those entities in the image. Try to elucidate the associations and relationships with diverse language formats instead of being restricted to sub-verb-obj tuples.";

/// Instantiate the knowledge-elicitation prompt for an LLM.
pub fn build_llm_prompt(subjects: &[String], objects: &[String]) -> Result<String, KgError> {
    if subjects.is_empty() && objects.is_empty() {
        return Err(KgError::NoEntities);
    }
    Ok(format!(
        "{PROMPT_HEAD}\nSubject list: [{}]\nObject list: [{}]\n{PROMPT_INSTRUCTION}",
        subjects.join(", "),
        objects.join(", ")
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diversify::KgEdge;
    use crate::mock::{MockKnowledgeSource, TableEmbedder};

    fn kg() -> MockKnowledgeSource {
        let mut kg = MockKnowledgeSource::default();
        kg.add_edge("boat", KgEdge { relation: "on".into(), target: "water".into(), weight: 2.0 });
        kg.add_edge("man", KgEdge { relation: "rides".into(), target: "horse".into(), weight: 1.0 });
        kg
    }

    fn emb(s: f64) -> TableEmbedder {
        // cos("rides", "mounts") = s
        TableEmbedder::new([("rides", vec![1.0, 0.0]), ("mounts", vec![s, (1.0 - s * s).sqrt()])])
    }

    #[test]
    fn identity_relation_matches() {
        let t = Triplet::new("boat", "on", "water").unwrap();
        let r = map_to_kg(&t, &kg(), &emb(0.5), KG_MATCH_THRESHOLD).unwrap();
        assert!(r.matched);
        assert_eq!(r.best_similarity, 1.0);
        assert_eq!(r.matched_edge, Some(("on".into(), 2.0)));
    }

    #[test]
    fn unmapped_endpoint_uses_sentinel() {
        let t = Triplet::new("boat", "on", "lake").unwrap();
        let r = map_to_kg(&t, &kg(), &emb(0.5), KG_MATCH_THRESHOLD).unwrap();
        assert!(!r.matched);
        assert_eq!(r.best_similarity, NO_SIMILARITY);
    }

    #[test]
    fn threshold_boundary() {
        let t = Triplet::new("horse", "mounts", "man").unwrap();
        for (s, want) in [(0.7, false), (0.8, true), (0.75, true), (0.749, false)] {
            let r = map_to_kg(&t, &kg(), &emb(s), KG_MATCH_THRESHOLD).unwrap();
            assert_eq!(r.matched, want, "similarity {s}");
        }
    }

    #[test]
    fn prompt_lists() {
        let p = build_llm_prompt(&["boat".into()], &["water".into()]).unwrap();
        assert!(p.contains("\nSubject list: [boat]\n"));
        assert!(p.ends_with(PROMPT_INSTRUCTION));
        let p = build_llm_prompt(&["man".into(), "dog".into()], &[]).unwrap();
        assert!(p.contains("Subject list: [man, dog]\nObject list: []"));
        assert!(matches!(build_llm_prompt(&[], &[]), Err(KgError::NoEntities)));
    }

    #[test]
    fn triplet_rejects_empty() {
        assert!(matches!(Triplet::new("a", " ", "b"), Err(KgError::EmptyField("relation"))));
    }
}
