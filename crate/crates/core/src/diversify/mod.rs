//! Diversity-driven data enhancement: relation importance scoring, random
//! dropping of low-importance descriptors and augmentation from external
//! knowledge sources.

mod augment;
mod drop;
mod score;

pub use augment::{augment_entities, augment_relations, AugmentFailure, Augmentation, RELATEDNESS_THRESHOLD};
pub use drop::{random_drop, DropConfig, DropOutcome};
pub use score::{relation_frequencies, score_table, tfidf_plus, RelationScore, RelationScoreTable, ScoreGrid, Tercile};

use crate::adapter::AdapterError;
use crate::corpus::{dedup_corpus, Corpus, Provenance};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgEdge {
    #[serde(rename = "rel")]
    pub relation: String,
    pub target: String,
    pub weight: f64,
}

/// A ConceptNet-like source of weighted edges and word relatedness.
pub trait KnowledgeSourceAdapter {
    fn has_node(&self, node: &str) -> Result<bool, AdapterError>;
    fn edges(&self, node: &str) -> Result<Vec<KgEdge>, AdapterError>;
    /// Relatedness in [0, 1].
    fn relatedness(&self, a: &str, b: &str) -> Result<f64, AdapterError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommonsenseBranch {
    /// Attributes of the subject.
    Attribute,
    /// Effects on others.
    Effect,
}

/// A COMET-like generator of commonsense completions.
pub trait CommonsenseAdapter {
    fn complete(&self, text: &str, branch: CommonsenseBranch) -> Result<Vec<String>, AdapterError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnhanceConfig {
    pub drop: DropConfig,
    pub grid: ScoreGrid,
    /// Normalized score at or above which a relation counts as important.
    pub high_threshold: f64,
    pub relatedness_threshold: f64,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            drop: DropConfig::default(),
            grid: ScoreGrid::default(),
            high_threshold: 0.6,
            relatedness_threshold: RELATEDNESS_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnhancementReport {
    pub original_count: usize,
    pub deduped_count: usize,
    pub dropped_count: usize,
    pub augmented_by_provenance: BTreeMap<Provenance, usize>,
}

#[derive(Debug, Clone)]
pub struct Enhancement {
    pub corpus: Corpus,
    pub report: EnhancementReport,
    pub table: RelationScoreTable,
    pub failures: Vec<AugmentFailure>,
}

/// Dedup, then drop, then augment. Scores are computed on the deduplicated
/// corpus. Augmented descriptors are appended to their source image.
pub fn enhance(
    corpus: &Corpus,
    kg: &dyn KnowledgeSourceAdapter,
    commonsense: &dyn CommonsenseAdapter,
    config: &EnhanceConfig,
) -> Enhancement {
    let deduped = dedup_corpus(corpus);
    let table = score_table(&deduped, &config.grid);
    let dropped = random_drop(corpus, &table, &config.drop);
    let relations = augment_relations(&dropped.corpus, &table, kg, config.high_threshold);
    let entities = augment_entities(&dropped.corpus, &table, kg, commonsense, config.relatedness_threshold);

    let mut by_provenance = BTreeMap::new();
    let mut images = dropped.corpus.clone().into_images();
    for d in relations.descriptors.iter().chain(&entities.descriptors) {
        *by_provenance.entry(d.provenance).or_insert(0) += 1;
        if let Some(img) = images.iter_mut().find(|i| i.image_id == d.image_id) {
            img.descriptors.push(d.clone());
        }
    }
    let mut failures = relations.failures;
    failures.extend(entities.failures);
    Enhancement {
        report: EnhancementReport {
            original_count: corpus.descriptor_count(),
            deduped_count: deduped.descriptor_count(),
            dropped_count: deduped.descriptor_count() - dropped.corpus.descriptor_count(),
            augmented_by_provenance: by_provenance,
        },
        corpus: Corpus::new(corpus.split(), images),
        table,
        failures,
    }
}
