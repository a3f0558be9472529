//! Domain records for relational region descriptions, JSON-lines ingestion
//! and persistence, and the indexes built over a corpus.

use crate::io::{to_jsonl, write_atomic};
use crate::text::normalize;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("invalid box [{0}, {1}, {2}, {3}]: need x_min < x_max and y_min < y_max")]
    InvalidBox(i64, i64, i64, i64),
    #[error("box {bbox} does not fit in a {width}x{height} image")]
    OutsideImage { bbox: BoundingBox, width: u32, height: u32 },
    #[error("patch size must be at least 1")]
    ZeroPatch,
}

/// Axis-aligned pixel box, origin top-left. Always satisfies
/// `x_min < x_max` and `y_min < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[u32; 4]")]
pub struct BoundingBox {
    x_min: u32,
    y_min: u32,
    x_max: u32,
    y_max: u32,
}

impl BoundingBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self, GeometryError> {
        if x_min < x_max && y_min < y_max {
            Ok(Self { x_min, y_min, x_max, y_max })
        } else {
            Err(GeometryError::InvalidBox(x_min as i64, y_min as i64, x_max as i64, y_max as i64))
        }
    }

    pub fn x_min(&self) -> u32 {
        self.x_min
    }
    pub fn y_min(&self) -> u32 {
        self.y_min
    }
    pub fn x_max(&self) -> u32 {
        self.x_max
    }
    pub fn y_max(&self) -> u32 {
        self.y_max
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.x_max <= width && self.y_max <= height
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let w = self.x_max.min(other.x_max).saturating_sub(self.x_min.max(other.x_min));
        let h = self.y_max.min(other.y_max).saturating_sub(self.y_min.max(other.y_min));
        w as u64 * h as u64
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }

    pub fn as_array(&self) -> [u32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl TryFrom<[i64; 4]> for BoundingBox {
    type Error = GeometryError;

    fn try_from([a, b, c, d]: [i64; 4]) -> Result<Self, Self::Error> {
        let conv = |v: i64| u32::try_from(v).map_err(|_| GeometryError::InvalidBox(a, b, c, d));
        BoundingBox::new(conv(a)?, conv(b)?, conv(c)?, conv(d)?)
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        b.as_array()
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub name: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

impl EntityMention {
    pub fn new(name: &str, bbox: BoundingBox) -> Self {
        Self { name: normalize_name(name), bbox }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Original,
    RelationAugmented,
    EntityAugmented,
    AttributeAugmented,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::RelationAugmented => "relation-augmented",
            Provenance::EntityAugmented => "entity-augmented",
            Provenance::AttributeAugmented => "attribute-augmented",
        }
    }
}

/// One region description: free-form text plus the parsed subject, object
/// and relation whose boxes define the relational region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationalDescriptor {
    pub descriptor_id: String,
    pub image_id: String,
    pub text: String,
    pub subject: EntityMention,
    pub object: EntityMention,
    pub relation: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub uri: String,
    pub descriptors: Vec<RelationalDescriptor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train, validation or test)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounters {
    pub images: usize,
    pub descriptors: usize,
    /// Distinct relation strings.
    pub relations: usize,
    /// Distinct subject and object names.
    pub entities: usize,
}

/// An immutable split of image records. Counters are computed on
/// construction and always agree with the contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    split: Split,
    images: Vec<ImageRecord>,
    counters: CorpusCounters,
}

impl Corpus {
    pub fn new(split: Split, images: Vec<ImageRecord>) -> Self {
        let counters = count(&images);
        Self { split, images, counters }
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn counters(&self) -> CorpusCounters {
        self.counters
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &RelationalDescriptor> {
        self.images.iter().flat_map(|i| i.descriptors.iter())
    }

    pub fn descriptor_count(&self) -> usize {
        self.counters.descriptors
    }

    pub fn into_images(self) -> Vec<ImageRecord> {
        self.images
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        to_jsonl(self.images.iter().map(WireImage::from)).expect("corpus records serialize")
    }

    /// Persist as JSON lines, one image per line.
    pub fn persist(&self, path: &Path) -> Result<(), CorpusError> {
        write_atomic(path, &self.to_jsonl()).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
    }
}

fn count(images: &[ImageRecord]) -> CorpusCounters {
    let mut relations = HashSet::new();
    let mut entities = HashSet::new();
    let mut descriptors = 0;
    for d in images.iter().flat_map(|i| &i.descriptors) {
        descriptors += 1;
        relations.insert(d.relation.as_str());
        entities.insert(d.subject.name.as_str());
        entities.insert(d.object.name.as_str());
    }
    CorpusCounters { images: images.len(), descriptors, relations: relations.len(), entities: entities.len() }
}

pub(crate) fn normalize_name(name: &str) -> String {
    name.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhraseOrigin {
    Generated,
    Training,
    Augmented,
}

/// A free-form knowledge string bound to an image region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgePhrase {
    pub phrase_id: String,
    pub image_id: String,
    pub region: BoundingBox,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub origin: PhraseOrigin,
}

impl KnowledgePhrase {
    pub fn validate(&self) -> Result<(), String> {
        if self.text.trim().is_empty() {
            return Err(format!("phrase {}: empty text", self.phrase_id));
        }
        match self.confidence {
            Some(c) if !(0.0..=1.0).contains(&c) => Err(format!("phrase {}: confidence {c} outside [0, 1]", self.phrase_id)),
            None if self.origin == PhraseOrigin::Generated => {
                Err(format!("phrase {}: generated phrase without confidence", self.phrase_id))
            }
            _ => Ok(()),
        }
    }
}

// ---------------------------------------------------------------------------
// Wire format

#[derive(Debug, Serialize, Deserialize)]
struct WireEntity {
    name: String,
    #[serde(rename = "box")]
    bbox: [i64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
struct WireDescriptor {
    id: String,
    text: String,
    subject: WireEntity,
    object: WireEntity,
    relation: String,
    provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireImage {
    image_id: String,
    width: i64,
    height: i64,
    uri: String,
    descriptors: Vec<WireDescriptor>,
}

impl From<&ImageRecord> for WireImage {
    fn from(img: &ImageRecord) -> Self {
        let ent = |e: &EntityMention| WireEntity { name: e.name.clone(), bbox: e.bbox.as_array().map(i64::from) };
        WireImage {
            image_id: img.image_id.clone(),
            width: img.width as i64,
            height: img.height as i64,
            uri: img.uri.clone(),
            descriptors: img
                .descriptors
                .iter()
                .map(|d| WireDescriptor {
                    id: d.descriptor_id.clone(),
                    text: d.text.clone(),
                    subject: ent(&d.subject),
                    object: ent(&d.object),
                    relation: d.relation.clone(),
                    provenance: d.provenance,
                })
                .collect(),
        }
    }
}

/// A problem with one input record, located by line and record id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordIssue {
    pub line: usize,
    pub locator: String,
    pub message: String,
}

impl fmt::Display for RecordIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.locator.is_empty() {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "line {} ({}): {}", self.line, self.locator, self.message)
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{} invalid record(s):\n{}", .0.len(), .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<RecordIssue>),
}

impl CorpusError {
    pub fn issues(&self) -> &[RecordIssue] {
        match self {
            CorpusError::Invalid(v) => v,
            CorpusError::Io { .. } => &[],
        }
    }
}

fn validate_image(line: usize, wire: WireImage, issues: &mut Vec<RecordIssue>) -> Option<ImageRecord> {
    let before = issues.len();
    let mut push = |locator: String, message: String| issues.push(RecordIssue { line, locator, message });
    let dims = (u32::try_from(wire.width).ok().filter(|w| *w > 0), u32::try_from(wire.height).ok().filter(|h| *h > 0));
    if dims.0.is_none() || dims.1.is_none() {
        push(wire.image_id.clone(), format!("image dimensions must be positive, got {}x{}", wire.width, wire.height));
    }
    if wire.image_id.trim().is_empty() {
        push(String::new(), "empty image_id".into());
    }
    let (width, height) = (dims.0.unwrap_or(0), dims.1.unwrap_or(0));
    let mut descriptors = Vec::with_capacity(wire.descriptors.len());
    for d in wire.descriptors {
        let loc = format!("{}/{}", wire.image_id, d.id);
        if d.id.trim().is_empty() {
            push(loc.clone(), "empty descriptor id".into());
        }
        if d.text.trim().is_empty() {
            push(loc.clone(), "empty text".into());
        }
        let relation = normalize_name(&d.relation);
        if relation.is_empty() {
            push(loc.clone(), "empty relation".into());
        }
        let mut entity = |role: &str, e: WireEntity| -> Option<EntityMention> {
            let name = normalize_name(&e.name);
            if name.is_empty() {
                push(loc.clone(), format!("empty {role} name"));
            }
            match BoundingBox::try_from(e.bbox) {
                Ok(b) if width > 0 && height > 0 && !b.fits_within(width, height) => {
                    push(loc.clone(), format!("{role} {}", GeometryError::OutsideImage { bbox: b, width, height }));
                    None
                }
                Ok(b) => Some(EntityMention { name, bbox: b }),
                Err(e) => {
                    push(loc.clone(), format!("{role} {e}"));
                    None
                }
            }
        };
        let subject = entity("subject", d.subject);
        let object = entity("object", d.object);
        if let (Some(subject), Some(object)) = (subject, object) {
            descriptors.push(RelationalDescriptor {
                descriptor_id: d.id,
                image_id: wire.image_id.clone(),
                text: d.text,
                subject,
                object,
                relation,
                provenance: d.provenance,
            });
        }
    }
    (issues.len() == before).then(|| ImageRecord { image_id: wire.image_id, width, height, uri: wire.uri, descriptors })
}

/// Parse and validate a JSON-lines corpus document. Every invalid record is
/// reported, not just the first.
pub fn parse_corpus(text: &str, split: Split) -> Result<Corpus, CorpusError> {
    let mut issues = Vec::new();
    let mut images = Vec::new();
    let mut image_ids = HashSet::new();
    let mut descriptor_ids = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let wire: WireImage = match serde_json::from_str(raw) {
            Ok(w) => w,
            Err(e) => {
                issues.push(RecordIssue { line, locator: String::new(), message: format!("schema violation: {e}") });
                continue;
            }
        };
        if let Some(img) = validate_image(line, wire, &mut issues) {
            if !image_ids.insert(img.image_id.clone()) {
                issues.push(RecordIssue { line, locator: img.image_id.clone(), message: "duplicate image_id".into() });
            }
            for d in &img.descriptors {
                if !descriptor_ids.insert(d.descriptor_id.clone()) {
                    issues.push(RecordIssue {
                        line,
                        locator: format!("{}/{}", img.image_id, d.descriptor_id),
                        message: "duplicate descriptor id".into(),
                    });
                }
            }
            images.push(img);
        }
    }
    if issues.is_empty() {
        Ok(Corpus::new(split, images))
    } else {
        Err(CorpusError::Invalid(issues))
    }
}

pub fn ingest_dataset(path: &Path, split: Split) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    parse_corpus(&text, split)
}

/// Drop descriptors whose normalized text repeats an earlier one in the same
/// image. The first occurrence wins and order is otherwise preserved.
pub fn dedup_descriptors(image: &ImageRecord) -> ImageRecord {
    let mut seen = HashSet::new();
    let descriptors = image.descriptors.iter().filter(|d| seen.insert(normalize(&d.text))).cloned().collect();
    ImageRecord { descriptors, ..image.clone() }
}

pub fn dedup_corpus(corpus: &Corpus) -> Corpus {
    Corpus::new(corpus.split(), corpus.images().iter().map(dedup_descriptors).collect())
}

/// Relation counts between ordered (subject, object) name pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairRelationIndex {
    pairs: BTreeMap<(String, String), BTreeMap<String, usize>>,
}

impl PairRelationIndex {
    pub fn relations(&self, subject: &str, object: &str) -> Option<&BTreeMap<String, usize>> {
        self.pairs.get(&(subject.to_string(), object.to_string()))
    }

    pub fn pair_total(&self, subject: &str, object: &str) -> usize {
        self.relations(subject, object).map_or(0, |m| m.values().sum())
    }

    /// Fraction of the pair's descriptors that use `relation`.
    pub fn share(&self, subject: &str, object: &str, relation: &str) -> f64 {
        let total = self.pair_total(subject, object);
        if total == 0 {
            return 0.0;
        }
        let n = self.relations(subject, object).and_then(|m| m.get(relation)).copied().unwrap_or(0);
        n as f64 / total as f64
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, String), &BTreeMap<String, usize>)> {
        self.pairs.iter()
    }
}

pub fn index_pair_relations(corpus: &Corpus) -> PairRelationIndex {
    let mut pairs: BTreeMap<(String, String), BTreeMap<String, usize>> = BTreeMap::new();
    for d in corpus.descriptors() {
        *pairs
            .entry((d.subject.name.clone(), d.object.name.clone()))
            .or_default()
            .entry(d.relation.clone())
            .or_default() += 1;
    }
    PairRelationIndex { pairs }
}

/// Distinct entity names mentioned by an image's descriptors.
pub fn image_entities(image: &ImageRecord) -> BTreeSet<String> {
    image.descriptors.iter().flat_map(|d| [d.subject.name.clone(), d.object.name.clone()]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(a: u32, b: u32, c: u32, d: u32) -> BoundingBox {
        BoundingBox::new(a, b, c, d).unwrap()
    }

    fn desc(id: &str, text: &str, s: &str, r: &str, o: &str) -> RelationalDescriptor {
        RelationalDescriptor {
            descriptor_id: id.into(),
            image_id: "img".into(),
            text: text.into(),
            subject: EntityMention::new(s, bx(0, 0, 10, 10)),
            object: EntityMention::new(o, bx(5, 5, 20, 20)),
            relation: r.into(),
            provenance: Provenance::Original,
        }
    }

    fn image(descriptors: Vec<RelationalDescriptor>) -> ImageRecord {
        ImageRecord { image_id: "img".into(), width: 100, height: 100, uri: "img.jpg".into(), descriptors }
    }

    #[test]
    fn box_rejects_degenerate_and_negative() {
        assert!(BoundingBox::new(5, 0, 5, 10).is_err());
        assert!(BoundingBox::new(0, 10, 5, 2).is_err());
        assert!(BoundingBox::try_from([-1, 0, 4, 4]).is_err());
        assert_eq!(bx(0, 0, 4, 2).area(), 8);
    }

    #[test]
    fn box_serializes_as_array() {
        let json = serde_json::to_string(&bx(1, 2, 3, 4)).unwrap();
        assert_eq!(json, "[1,2,3,4]");
        let back: BoundingBox = serde_json::from_str(&json).unwrap();
        assert_eq!(back, bx(1, 2, 3, 4));
        assert!(serde_json::from_str::<BoundingBox>("[3,2,1,4]").is_err());
    }

    #[test]
    fn empty_document_yields_zero_counters() {
        let c = parse_corpus("", Split::Train).unwrap();
        assert_eq!(c.counters(), CorpusCounters::default());
        let c = parse_corpus("\n  \n", Split::Test).unwrap();
        assert_eq!(c.counters().images, 0);
    }

    #[test]
    fn all_issues_reported_with_line_numbers() {
        let doc = r#"{"image_id":"a","width":10,"height":10,"uri":"a","descriptors":[{"id":"d1","text":"","subject":{"name":"x","box":[0,0,5,5]},"object":{"name":"y","box":[0,0,50,5]},"relation":"on","provenance":"original"}]}
{"image_id":"b","width":10,"height":10,"uri":"b"}
{"image_id":"c","width":10,"height":10,"uri":"c","descriptors":[]}"#;
        let err = parse_corpus(doc, Split::Train).unwrap_err();
        let issues = err.issues();
        assert_eq!(issues.len(), 3, "{err}");
        assert_eq!((issues[0].line, issues[0].locator.as_str()), (1, "a/d1"));
        assert!(issues[0].message.contains("empty text"));
        assert!(issues[1].message.contains("does not fit"));
        assert_eq!(issues[2].line, 2);
        assert!(issues[2].message.contains("missing field `descriptors`"));
    }

    #[test]
    fn wrong_type_is_schema_violation() {
        let doc = r#"{"image_id":"a","width":"ten","height":10,"uri":"a","descriptors":[]}"#;
        let err = parse_corpus(doc, Split::Train).unwrap_err();
        assert!(err.issues()[0].message.starts_with("schema violation"));
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let img = image(vec![
            desc("1", "Boat on water", "boat", "on", "water"),
            desc("2", "boat  on WATER.", "boat", "on", "water"),
            desc("3", "dog on grass", "dog", "on", "grass"),
        ]);
        let out = dedup_descriptors(&img);
        let ids: Vec<_> = out.descriptors.iter().map(|d| d.descriptor_id.as_str()).collect();
        assert_eq!(ids, ["1", "3"]);
        assert_eq!(dedup_descriptors(&out), out);
    }

    #[test]
    fn dedup_leaves_distinct_texts_alone() {
        let img = image(vec![desc("1", "a on b", "a", "on", "b"), desc("2", "a near b", "a", "near", "b")]);
        assert_eq!(dedup_descriptors(&img), img);
    }

    #[test]
    fn pair_index_counts_relations() {
        let img = image(vec![
            desc("1", "a on b", "a", "on", "b"),
            desc("2", "a on b again", "a", "on", "b"),
            desc("3", "a near b", "a", "near", "b"),
        ]);
        let idx = index_pair_relations(&Corpus::new(Split::Train, vec![img]));
        let rels = idx.relations("a", "b").unwrap();
        assert_eq!(rels.get("on"), Some(&2));
        assert_eq!(rels.get("near"), Some(&1));
        assert_eq!(idx.pair_total("a", "b"), 3);
        assert!(idx.relations("b", "a").is_none());
        assert!((idx.share("a", "b", "on") - 2.0 / 3.0).abs() < 1e-12);
        assert!(index_pair_relations(&Corpus::new(Split::Train, vec![])).is_empty());
    }

    #[test]
    fn generated_phrase_needs_confidence() {
        let mut p = KnowledgePhrase {
            phrase_id: "p".into(),
            image_id: "i".into(),
            region: bx(0, 0, 1, 1),
            text: "x on y".into(),
            confidence: None,
            origin: PhraseOrigin::Generated,
        };
        assert!(p.validate().is_err());
        p.confidence = Some(0.5);
        assert!(p.validate().is_ok());
        p.confidence = Some(1.5);
        assert!(p.validate().is_err());
    }
}
