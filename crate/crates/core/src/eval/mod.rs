//! Generation metrics, knowledge quality metrics and rater agreement.

mod quality;
mod text_metrics;

pub use quality::{
    diversity, freshness, generation_scores, quality_report, DiversityMode, GenerationScores, ImageQuality,
    QualityConfig, QualityReport, SampleSizes,
};
pub use text_metrics::{bleu, meteor, rouge_l, ROUGE_BETA};

use crate::adapter::AdapterError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("text has no tokens")]
    EmptyText,
    #[error("reference set is empty")]
    NoReferences,
    #[error("generated set is empty")]
    NoGenerated,
    #[error("need at least 2 phrases, got {0}")]
    TooFewPhrases(usize),
    #[error("label lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label lists are empty")]
    NoLabels,
    #[error("{0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

/// Chance-corrected agreement between two raters' labels.
///
/// Returns 1 when chance agreement is already 1 (both raters used a single
/// identical label throughout).
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::NoLabels);
    }
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut marginals: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    for x in a {
        marginals.entry(x).or_default().0 += 1;
    }
    for y in b {
        marginals.entry(y).or_default().1 += 1;
    }
    let chance: f64 = marginals.values().map(|(ca, cb)| (*ca as f64 / n) * (*cb as f64 / n)).sum();
    if (1.0 - chance).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok(((observed - chance) / (1.0 - chance)).clamp(-1.0, 1.0))
}

pub const VALIDITY_SCALE: [u8; 2] = [0, 1];
pub const CONFORMITY_SCALE: [u8; 4] = [0, 1, 2, 3];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RatingError {
    #[error("validity {0} is outside the scale {{0, 1}}")]
    Validity(i64),
    #[error("conformity {0} is outside the scale {{0, 1, 2, 3}}")]
    Conformity(i64),
    #[error("{0} must not be empty")]
    EmptyId(&'static str),
    #[error("ratings line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One human judgment of one knowledge phrase.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRecord {
    pub rater_id: String,
    pub phrase_id: String,
    pub image_id: String,
    pub validity: i64,
    pub conformity: i64,
}

impl RatingRecord {
    pub fn validate(&self) -> Result<(), RatingError> {
        for (name, v) in [("rater_id", &self.rater_id), ("phrase_id", &self.phrase_id), ("image_id", &self.image_id)] {
            if v.trim().is_empty() {
                return Err(RatingError::EmptyId(name));
            }
        }
        if !(0..=1).contains(&self.validity) {
            return Err(RatingError::Validity(self.validity));
        }
        if !(0..=3).contains(&self.conformity) {
            return Err(RatingError::Conformity(self.conformity));
        }
        Ok(())
    }
}

/// Parse and validate a ratings JSONL document.
pub fn parse_ratings(text: &str) -> Result<Vec<RatingRecord>, RatingError> {
    let records: Vec<RatingRecord> = crate::io::from_jsonl(text)
        .map_err(|(line, e)| RatingError::Parse { line, message: e.to_string() })?;
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|e| RatingError::Parse { line: i + 1, message: e.to_string() })?;
    }
    Ok(records)
}

pub fn ratings_to_jsonl(records: &[RatingRecord]) -> Vec<u8> {
    crate::io::to_jsonl(records).expect("ratings serialize")
}
