//! Downstream enrichment: caption retrieval, situation recognition and
//! multiple-choice reasoning, plus their metrics.

mod gsr;
mod metrics;

pub use gsr::{gsr_descriptor_set, gsr_score, predict_verb, stem, DescriptorSet, SynonymMatch, VerbLists};
pub use metrics::{classification_metrics, recall_at_k, ClassificationMetrics};

use crate::adapter::AdapterError;
use crate::corpus::{index_pair_relations, Corpus, PairRelationIndex};
use crate::diversify::KnowledgeSourceAdapter;
use crate::kg::{analyze, entity_pairs, main_verbs, noun_heads};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Default minimum relation share for caption enrichment (strict).
pub const MIN_SHARE: f64 = 0.3;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("min_share must lie in (0, 1), got {0}")]
    MinShare(f64),
    #[error("need at least 2 options, got {0}")]
    TooFewOptions(usize),
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

/// Scores how well a text describes an image; higher is better.
pub trait MatchAdapter {
    fn score(&self, image_id: &str, text: &str) -> Result<f64, AdapterError>;
}

/// Frozen lookup structures over a knowledge corpus.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeIndex {
    pairs: PairRelationIndex,
    texts: BTreeMap<(String, String, String), BTreeSet<String>>,
    /// relation -> descriptor texts with subject and object, one per descriptor
    by_relation: BTreeMap<String, Vec<(String, String, String)>>,
}

impl KnowledgeIndex {
    pub fn new(corpus: &Corpus) -> Self {
        let mut texts: BTreeMap<_, BTreeSet<String>> = BTreeMap::new();
        let mut by_relation: BTreeMap<String, Vec<_>> = BTreeMap::new();
        for d in corpus.descriptors() {
            texts
                .entry((d.subject.name.clone(), d.object.name.clone(), d.relation.clone()))
                .or_default()
                .insert(d.text.clone());
            by_relation.entry(d.relation.clone()).or_default().push((
                d.text.clone(),
                d.subject.name.clone(),
                d.object.name.clone(),
            ));
        }
        KnowledgeIndex { pairs: index_pair_relations(corpus), texts, by_relation }
    }

    pub fn pairs(&self) -> &PairRelationIndex {
        &self.pairs
    }

    pub(crate) fn relations(&self) -> impl Iterator<Item = (&String, &Vec<(String, String, String)>)> {
        self.by_relation.iter()
    }

    /// Phrases for a known ordered pair whose relation share exceeds
    /// `min_share`, in relation then text order.
    fn pair_phrases(&self, subject: &str, object: &str, min_share: f64) -> Vec<String> {
        let Some(rels) = self.pairs.relations(subject, object) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for rel in rels.keys() {
            if self.pairs.share(subject, object, rel) > min_share {
                let key = (subject.to_string(), object.to_string(), rel.clone());
                out.extend(self.texts.get(&key).into_iter().flatten().cloned());
            }
        }
        out
    }
}

fn check_share(min_share: f64) -> Result<(), AppError> {
    if min_share > 0.0 && min_share < 1.0 {
        Ok(())
    } else {
        Err(AppError::MinShare(min_share))
    }
}

fn pair_rule(text: &str, index: &KnowledgeIndex, min_share: f64) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for (a, b) in entity_pairs(text) {
        for (s, o) in [(&a, &b), (&b, &a)] {
            for p in index.pair_phrases(s, o, min_share) {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Append `extra` to `base` without touching `base`.
fn join_appended(base: &str, extra: &[String]) -> String {
    if extra.is_empty() {
        return base.to_string();
    }
    let sep = if base.trim_end().ends_with('.') || base.is_empty() { " " } else { ". " };
    format!("{base}{sep}{}", extra.join(". "))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentRecord {
    pub query_id: String,
    pub original: String,
    pub enriched: String,
    pub appended: Vec<String>,
}

/// Append knowledge for every entity pair in the caption whose relation
/// occurs with more than `min_share` of that pair's descriptors. Pairs are
/// looked up in both orders.
pub fn enrich_caption(caption: &str, index: &KnowledgeIndex, min_share: f64) -> Result<(String, Vec<String>), AppError> {
    check_share(min_share)?;
    let appended = pair_rule(caption, index, min_share);
    Ok((join_appended(caption, &appended), appended))
}

/// Two-level option enrichment: pair relations from question plus option,
/// then a situation descriptor for each main verb of the option.
pub fn enrich_vcr(
    question: &str,
    options: &[String],
    index: &KnowledgeIndex,
    verbs: &VerbLists,
    kg: Option<&dyn KnowledgeSourceAdapter>,
    min_share: f64,
) -> Result<Vec<(String, Vec<String>)>, AppError> {
    if options.len() < 2 {
        return Err(AppError::TooFewOptions(options.len()));
    }
    check_share(min_share)?;
    let mut out = Vec::with_capacity(options.len());
    for option in options {
        let context = format!("{question} {option}");
        let mut appended = pair_rule(&context, index, min_share);
        let objects: BTreeSet<String> = noun_heads(&context).into_iter().collect();
        for verb in main_verbs(option) {
            let set = gsr_descriptor_set(&verb, index, &objects, verbs, kg)?;
            for d in set.descriptors.into_iter().skip(1) {
                if !appended.contains(&d) {
                    appended.push(d);
                }
            }
        }
        out.push((join_appended(option, &appended), appended));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueryFilter {
    pub min_nouns: usize,
    pub min_relations: usize,
}

impl QueryFilter {
    pub const CAPTION: QueryFilter = QueryFilter { min_nouns: 8, min_relations: 0 };
    pub const VCR: QueryFilter = QueryFilter { min_nouns: 5, min_relations: 2 };

    pub fn accepts(&self, text: &str) -> bool {
        let a = analyze(text);
        a.nouns >= self.min_nouns && a.relations >= self.min_relations
    }
}

impl Default for QueryFilter {
    fn default() -> Self {
        QueryFilter::CAPTION
    }
}
