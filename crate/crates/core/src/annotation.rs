//! Backend state for human rating sessions: per-rater task queues, validated
//! and audited rating submission, agreement views and export.

use crate::corpus::KnowledgePhrase;
use crate::eval::{cohens_kappa, RatingError, RatingRecord};
use crate::io::{from_jsonl, to_jsonl};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("unknown rater {0:?}")]
    UnknownRater(String),
    #[error("unknown phrase {0:?}")]
    UnknownPhrase(String),
    #[error("phrase {phrase_id} belongs to image {expected}, not {got}")]
    ImageMismatch { phrase_id: String, expected: String, got: String },
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error("no phrases to annotate")]
    Empty,
    #[error("ratings log {}: {message}", .path.display())]
    Log { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskStatus {
    Pending,
    InProgress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPhrase {
    pub phrase_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub image_id: String,
    pub image_uri: String,
    pub phrases: Vec<TaskPhrase>,
    pub rater_id: String,
    pub status: TaskStatus,
}

/// One accepted submission; `previous` is set when it replaced a rating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingEvent {
    pub seq: u64,
    pub record: RatingRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous: Option<RatingRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub accepted: bool,
    pub overwritten: bool,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgreementStatus {
    Ok,
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAgreement {
    /// Symmetric; `None` where two raters share no rated phrase.
    pub matrix: Vec<Vec<Option<f64>>>,
    pub average: Option<f64>,
    pub status: AgreementStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementView {
    pub raters: Vec<String>,
    pub validity: MetricAgreement,
    pub conformity: MetricAgreement,
}

fn metric_agreement(raters: &[String], by_rater: &BTreeMap<&str, BTreeMap<&str, i64>>) -> MetricAgreement {
    let n = raters.len();
    let mut matrix = vec![vec![None; n]; n];
    let mut values = Vec::new();
    for i in 0..n {
        matrix[i][i] = Some(1.0);
        for j in i + 1..n {
            let (Some(a), Some(b)) = (by_rater.get(raters[i].as_str()), by_rater.get(raters[j].as_str())) else {
                continue;
            };
            let shared: Vec<(i64, i64)> = a.iter().filter_map(|(p, x)| b.get(p).map(|y| (*x, *y))).collect();
            if shared.is_empty() {
                continue;
            }
            let (xa, xb): (Vec<i64>, Vec<i64>) = shared.into_iter().unzip();
            let k = cohens_kappa(&xa, &xb).expect("equal non-empty lists");
            matrix[i][j] = Some(k);
            matrix[j][i] = Some(k);
            values.push(k);
        }
    }
    let average = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    let status = if average.is_some() { AgreementStatus::Ok } else { AgreementStatus::InsufficientData };
    MetricAgreement { matrix, average, status }
}

/// Pairwise agreement over the phrases each pair of raters both rated.
/// Raters are listed in sorted order; with duplicates the last record wins.
pub fn agreement_from_ratings(raters: &[String], ratings: &[RatingRecord]) -> AgreementView {
    let mut raters: Vec<String> = raters.to_vec();
    raters.sort();
    raters.dedup();
    let mut validity: BTreeMap<&str, BTreeMap<&str, i64>> = BTreeMap::new();
    let mut conformity: BTreeMap<&str, BTreeMap<&str, i64>> = BTreeMap::new();
    for r in ratings {
        validity.entry(&r.rater_id).or_default().insert(&r.phrase_id, r.validity);
        conformity.entry(&r.rater_id).or_default().insert(&r.phrase_id, r.conformity);
    }
    AgreementView {
        validity: metric_agreement(&raters, &validity),
        conformity: metric_agreement(&raters, &conformity),
        raters,
    }
}

struct ImageEntry {
    uri: String,
    phrases: Vec<TaskPhrase>,
}

pub struct AnnotationStore {
    images: BTreeMap<String, ImageEntry>,
    phrase_image: BTreeMap<String, String>,
    raters: BTreeSet<String>,
    current: BTreeMap<(String, String), RatingRecord>,
    audit: Vec<RatingEvent>,
    log: Option<PathBuf>,
}

impl AnnotationStore {
    /// Build tasks from knowledge phrases. `phrases_per_image` keeps only the
    /// first N phrases of each image; `uris` maps image ids to display
    /// locations (the id itself is used when absent).
    pub fn new(
        phrases: &[KnowledgePhrase],
        uris: &BTreeMap<String, String>,
        raters: impl IntoIterator<Item = String>,
        phrases_per_image: Option<usize>,
    ) -> Result<Self, AnnotationError> {
        let mut images: BTreeMap<String, ImageEntry> = BTreeMap::new();
        let mut phrase_image = BTreeMap::new();
        for p in phrases {
            let entry = images.entry(p.image_id.clone()).or_insert_with(|| ImageEntry {
                uri: uris.get(&p.image_id).cloned().unwrap_or_else(|| p.image_id.clone()),
                phrases: Vec::new(),
            });
            if phrases_per_image.is_some_and(|cap| entry.phrases.len() >= cap) {
                continue;
            }
            entry.phrases.push(TaskPhrase { phrase_id: p.phrase_id.clone(), text: p.text.clone() });
            phrase_image.insert(p.phrase_id.clone(), p.image_id.clone());
        }
        if phrase_image.is_empty() {
            return Err(AnnotationError::Empty);
        }
        Ok(AnnotationStore {
            images,
            phrase_image,
            raters: raters.into_iter().collect(),
            current: BTreeMap::new(),
            audit: Vec::new(),
            log: None,
        })
    }

    /// Persist every accepted submission to `path` (append-only JSONL of
    /// rating events), replaying any events already there.
    pub fn with_log(mut self, path: &Path) -> Result<Self, AnnotationError> {
        let log_err = |message: String| AnnotationError::Log { path: path.to_path_buf(), message };
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| log_err(e.to_string()))?;
            let events: Vec<RatingEvent> = from_jsonl(&text).map_err(|(line, e)| log_err(format!("line {line}: {e}")))?;
            for e in events {
                self.apply(e.record)?;
            }
        }
        self.log = Some(path.to_path_buf());
        Ok(self)
    }

    pub fn raters(&self) -> Vec<String> {
        self.raters.iter().cloned().collect()
    }

    pub fn register_rater(&mut self, rater: &str) {
        self.raters.insert(rater.to_string());
    }

    fn task_for(&self, rater: &str, image_id: &str, entry: &ImageEntry) -> AnnotationTask {
        let rated = entry.phrases.iter().filter(|p| self.current.contains_key(&(rater.to_string(), p.phrase_id.clone()))).count();
        AnnotationTask {
            task_id: format!("{image_id}:{rater}"),
            image_id: image_id.to_string(),
            image_uri: entry.uri.clone(),
            phrases: entry.phrases.clone(),
            rater_id: rater.to_string(),
            status: if rated == 0 { TaskStatus::Pending } else { TaskStatus::InProgress },
        }
    }

    /// The rater's first image (by id) with an unrated phrase.
    pub fn next_task(&self, rater: &str) -> Result<Option<AnnotationTask>, AnnotationError> {
        if !self.raters.contains(rater) {
            return Err(AnnotationError::UnknownRater(rater.to_string()));
        }
        Ok(self
            .images
            .iter()
            .find(|(_, e)| e.phrases.iter().any(|p| !self.current.contains_key(&(rater.to_string(), p.phrase_id.clone()))))
            .map(|(id, e)| self.task_for(rater, id, e)))
    }

    fn apply(&mut self, record: RatingRecord) -> Result<Ack, AnnotationError> {
        record.validate()?;
        if !self.raters.contains(&record.rater_id) {
            return Err(AnnotationError::UnknownRater(record.rater_id));
        }
        let expected = self.phrase_image.get(&record.phrase_id).ok_or_else(|| AnnotationError::UnknownPhrase(record.phrase_id.clone()))?;
        if *expected != record.image_id {
            return Err(AnnotationError::ImageMismatch {
                phrase_id: record.phrase_id,
                expected: expected.clone(),
                got: record.image_id,
            });
        }
        let previous = self.current.insert((record.rater_id.clone(), record.phrase_id.clone()), record.clone());
        let seq = self.audit.len() as u64 + 1;
        let overwritten = previous.is_some();
        self.audit.push(RatingEvent { seq, record, previous });
        Ok(Ack { accepted: true, overwritten, seq })
    }

    /// Validate and store a rating. A second rating for the same rater and
    /// phrase replaces the first; both stay in the audit trail.
    pub fn submit_rating(&mut self, record: RatingRecord) -> Result<Ack, AnnotationError> {
        let ack = self.apply(record)?;
        if let Some(path) = &self.log {
            let event = self.audit.last().expect("event just recorded");
            let line = to_jsonl([event]).expect("event serializes");
            let log_err = |e: std::io::Error| AnnotationError::Log { path: path.clone(), message: e.to_string() };
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(log_err)?;
            f.write_all(&line).map_err(log_err)?;
        }
        Ok(ack)
    }

    pub fn audit(&self) -> &[RatingEvent] {
        &self.audit
    }

    /// Current ratings ordered by image, phrase and rater.
    pub fn ratings(&self) -> Vec<RatingRecord> {
        let mut out: Vec<RatingRecord> = self.current.values().cloned().collect();
        out.sort_by(|a, b| (&a.image_id, &a.phrase_id, &a.rater_id).cmp(&(&b.image_id, &b.phrase_id, &b.rater_id)));
        out
    }

    pub fn agreement_view(&self) -> AgreementView {
        agreement_from_ratings(&self.raters(), &self.ratings())
    }

    pub fn export_jsonl(&self) -> Vec<u8> {
        crate::eval::ratings_to_jsonl(&self.ratings())
    }
}
