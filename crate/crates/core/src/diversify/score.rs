use crate::corpus::Corpus;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("phrase total N must be at least 1")]
    EmptyTotal,
    #[error("grid scales must be positive, got ({0}, {1})")]
    NonPositiveScale(f64, f64),
}

/// Occurrence count of every relation string.
pub fn relation_frequencies(corpus: &Corpus) -> BTreeMap<String, usize> {
    let mut freq = BTreeMap::new();
    for d in corpus.descriptors() {
        *freq.entry(d.relation.clone()).or_insert(0) += 1;
    }
    freq
}

/// `(ln(N / (1 + f_r * alpha1)))^alpha2`, with a negative logarithm clamped
/// to zero.
pub fn tfidf_plus(n: usize, f_r: usize, alpha1: f64, alpha2: f64) -> Result<f64, ScoreError> {
    if n == 0 {
        return Err(ScoreError::EmptyTotal);
    }
    if !(alpha1 > 0.0 && alpha2 > 0.0) {
        return Err(ScoreError::NonPositiveScale(alpha1, alpha2));
    }
    let log = (n as f64 / (1.0 + f_r as f64 * alpha1)).ln();
    Ok(if log > 0.0 { log.powf(alpha2) } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tercile {
    Low,
    Middle,
    High,
}

/// `(alpha1, alpha2)` per frequency tercile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreGrid {
    pub low: [f64; 2],
    pub middle: [f64; 2],
    pub high: [f64; 2],
}

impl Default for ScoreGrid {
    fn default() -> Self {
        Self { low: [1.0, 1.0], middle: [2.0, 0.75], high: [5.0, 0.5] }
    }
}

impl ScoreGrid {
    pub fn scales(&self, tercile: Tercile) -> (f64, f64) {
        let [a1, a2] = match tercile {
            Tercile::Low => self.low,
            Tercile::Middle => self.middle,
            Tercile::High => self.high,
        };
        (a1, a2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationScore {
    pub frequency: usize,
    pub tercile: Tercile,
    pub raw: f64,
    /// Min-max normalized score in [0, 1].
    pub normalized: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationScoreTable {
    /// Number of descriptors the frequencies were taken over.
    pub total: usize,
    pub relations: BTreeMap<String, RelationScore>,
}

impl RelationScoreTable {
    /// Normalized score of `relation`, if it occurs in the scored corpus.
    pub fn score(&self, relation: &str) -> Option<f64> {
        self.relations.get(relation).map(|s| s.normalized)
    }
}

/// Tercile by frequency rank: a relation's rank is the number of distinct
/// relations strictly rarer than it, so equal frequencies share a tercile.
fn tercile_of(rank: usize, k: usize) -> Tercile {
    match 3 * rank / k {
        0 => Tercile::Low,
        1 => Tercile::Middle,
        _ => Tercile::High,
    }
}

/// Score every relation of `corpus` with grid-selected scales and normalize
/// the raw scores to [0, 1]. When all raw scores are equal every relation
/// gets 1.
pub fn score_table(corpus: &Corpus, grid: &ScoreGrid) -> RelationScoreTable {
    let freq = relation_frequencies(corpus);
    let total = corpus.descriptor_count();
    let k = freq.len();
    let mut sorted: Vec<usize> = freq.values().copied().collect();
    sorted.sort_unstable();

    let mut relations = BTreeMap::new();
    for (rel, &f) in &freq {
        let rank = sorted.partition_point(|&x| x < f);
        let tercile = tercile_of(rank, k);
        let (a1, a2) = grid.scales(tercile);
        let raw = tfidf_plus(total, f, a1, a2).unwrap_or(0.0);
        relations.insert(rel.clone(), RelationScore { frequency: f, tercile, raw, normalized: 0.0 });
    }
    let (lo, hi) = relations
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.raw), hi.max(s.raw)));
    for s in relations.values_mut() {
        s.normalized = if hi > lo { (s.raw - lo) / (hi - lo) } else { 1.0 };
    }
    RelationScoreTable { total, relations }
}
