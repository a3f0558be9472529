//! Deterministic in-process adapters for tests, benches and offline runs.

use crate::adapter::AdapterError;
use crate::corpus::{normalize_name, BoundingBox, Corpus, ImageRecord};
use crate::diversify::{CommonsenseAdapter, CommonsenseBranch, KgEdge, KnowledgeSourceAdapter};
use crate::generator::{DecodingConfig, GeneratorAdapter, MaskPrompt, SimilarityAdapter};
use crate::region::{build_relational_regions, DetectorAdapter, DetectorLosses, RegionProposal, RelationalRegion};
use crate::text::tokenize;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Uniform value in [0, 1) derived from a hash of `parts`.
pub fn hash_unit(parts: &[&[u8]]) -> f64 {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p);
    }
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64
}

/// Bag of hashed unigrams and bigrams, L2-normalized. Entries are
/// non-negative so every cosine lies in [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(256)
    }
}

impl SimilarityAdapter for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, AdapterError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(AdapterError::EmptyInput);
        }
        let mut v = vec![0.0; self.dim];
        for t in &tokens {
            v[(fnv1a(t.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        for w in tokens.windows(2) {
            let bigram = format!("{} {}", w[0], w[1]);
            v[(fnv1a(bigram.as_bytes()) % self.dim as u64) as usize] += 0.5;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(v.into_iter().map(|x| x / norm).collect())
    }
}

/// Fixed text-to-vector table. Vectors are returned as given, so callers can
/// exercise the unit-norm contract.
#[derive(Debug, Clone, Default)]
pub struct TableEmbedder {
    table: BTreeMap<String, Vec<f64>>,
}

impl TableEmbedder {
    pub fn new<'a>(entries: impl IntoIterator<Item = (&'a str, Vec<f64>)>) -> Self {
        TableEmbedder { table: entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect() }
    }
}

impl SimilarityAdapter for TableEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, AdapterError> {
        self.table.get(text).cloned().ok_or_else(|| AdapterError::NotFound(text.to_string()))
    }
}

/// Detector that either replays fixed proposals or proposes relational
/// regions from an image's descriptors with hash-derived confidences.
#[derive(Debug, Clone, Default)]
pub struct MockDetector {
    fixed: BTreeMap<String, Vec<RegionProposal>>,
    derive_seed: Option<u64>,
    learned: BTreeMap<String, Vec<BoundingBox>>,
    steps: BTreeMap<String, u32>,
}

impl MockDetector {
    pub fn with_proposals<'a>(entries: impl IntoIterator<Item = (&'a str, Vec<RegionProposal>)>) -> Self {
        MockDetector { fixed: entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect(), ..Default::default() }
    }

    pub fn deriving(seed: u64) -> Self {
        MockDetector { derive_seed: Some(seed), ..Default::default() }
    }

    fn derived(&self, image: &ImageRecord, seed: u64) -> Result<Vec<RegionProposal>, AdapterError> {
        let boxes: BTreeSet<[u32; 4]> = match self.learned.get(&image.image_id) {
            Some(b) => b.iter().map(BoundingBox::as_array).collect(),
            None => build_relational_regions(image).iter().map(|r| r.bbox.as_array()).collect(),
        };
        boxes
            .into_iter()
            .map(|a| {
                let bbox = BoundingBox::new(a[0], a[1], a[2], a[3]).expect("stored boxes are valid");
                let coords: Vec<u8> = a.iter().flat_map(|c| c.to_le_bytes()).collect();
                let u = hash_unit(&[&seed.to_le_bytes(), image.image_id.as_bytes(), &coords]);
                RegionProposal::new(bbox, 0.05 + 0.95 * u)
            })
            .collect()
    }
}

impl DetectorAdapter for MockDetector {
    fn propose(&mut self, image: &ImageRecord) -> Result<Vec<RegionProposal>, AdapterError> {
        if let Some(p) = self.fixed.get(&image.image_id) {
            return Ok(p.clone());
        }
        match self.derive_seed {
            Some(seed) => self.derived(image, seed),
            None => Err(AdapterError::NotFound(image.image_id.clone())),
        }
    }

    /// Regression loss is the mean of `1 - best IoU` against the current
    /// proposals; knowledge loss is the mean `ln(1 + tokens)` of the texts,
    /// shrinking with the number of steps seen for the image.
    fn train_step(
        &mut self,
        image: &ImageRecord,
        targets: &[RelationalRegion],
        texts: &[String],
    ) -> Result<DetectorLosses, AdapterError> {
        if targets.is_empty() {
            return Err(AdapterError::EmptyInput);
        }
        let current: Vec<BoundingBox> = self.learned.get(&image.image_id).cloned().unwrap_or_default();
        let regression = targets
            .iter()
            .map(|t| 1.0 - current.iter().map(|b| b.iou(&t.bbox)).fold(0.0, f64::max))
            .sum::<f64>()
            / targets.len() as f64;
        let step = self.steps.entry(image.image_id.clone()).or_default();
        *step += 1;
        let knowledge = if texts.is_empty() {
            0.0
        } else {
            texts.iter().map(|t| (1.0 + tokenize(t).len() as f64).ln()).sum::<f64>() / texts.len() as f64 / *step as f64
        };
        self.learned.insert(image.image_id.clone(), targets.iter().map(|t| t.bbox).collect());
        Ok(DetectorLosses { regression, knowledge })
    }
}

/// Generator that returns a stored phrase for each (image, region).
#[derive(Debug, Clone, Default)]
pub struct TableGenerator {
    table: BTreeMap<(String, [u32; 4]), (String, f64)>,
}

const HIT_PROB: f64 = 0.9;
const MISS_PROB: f64 = 0.1;

impl TableGenerator {
    pub fn insert(&mut self, image_id: &str, region: BoundingBox, text: &str, confidence: f64) {
        self.table.insert((image_id.to_string(), region.as_array()), (text.to_string(), confidence));
    }

    /// One entry per relational region. When several descriptors share a
    /// region the one with the smallest seeded hash wins; its confidence is
    /// hash-derived as well.
    pub fn from_corpus(corpus: &Corpus, seed: u64) -> Self {
        let mut best: BTreeMap<(String, [u32; 4]), (f64, String)> = BTreeMap::new();
        for image in corpus.images() {
            for (d, r) in image.descriptors.iter().zip(build_relational_regions(image)) {
                let h = hash_unit(&[&seed.to_le_bytes(), d.descriptor_id.as_bytes()]);
                let key = (image.image_id.clone(), r.bbox.as_array());
                if best.get(&key).is_none_or(|(bh, _)| h < *bh) {
                    best.insert(key, (h, d.text.clone()));
                }
            }
        }
        let table = best.into_iter().map(|(k, (h, text))| (k, (text, 0.05 + 0.95 * h))).collect();
        TableGenerator { table }
    }

    fn token_probs(&self, image: &ImageRecord, mask: &MaskPrompt, text: &str) -> Result<Vec<f64>, AdapterError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(AdapterError::EmptyInput);
        }
        let known: BTreeSet<String> = self
            .table
            .get(&(image.image_id.clone(), mask.region.as_array()))
            .map(|(t, _)| tokenize(t).into_iter().collect())
            .unwrap_or_default();
        Ok(tokens.iter().map(|t| if known.contains(t) { HIT_PROB } else { MISS_PROB }).collect())
    }
}

impl GeneratorAdapter for TableGenerator {
    fn mle_loss(&mut self, image: &ImageRecord, mask: &MaskPrompt, target: &str) -> Result<f64, AdapterError> {
        let p = self.token_probs(image, mask, target)?;
        Ok(-p.iter().map(|x| x.ln()).sum::<f64>() / p.len() as f64)
    }

    fn generate(
        &mut self,
        image: &ImageRecord,
        mask: &MaskPrompt,
        decoding: &DecodingConfig,
    ) -> Result<(String, f64), AdapterError> {
        let (text, conf) = self
            .table
            .get(&(image.image_id.clone(), mask.region.as_array()))
            .ok_or_else(|| AdapterError::NotFound(format!("{} {}", image.image_id, mask.region)))?;
        let tokens: Vec<&str> = text.split_whitespace().take(decoding.max_tokens).collect();
        Ok((tokens.join(" "), *conf))
    }

    fn token_logprob(&mut self, image: &ImageRecord, mask: &MaskPrompt, text: &str) -> Result<f64, AdapterError> {
        Ok(self.token_probs(image, mask, text)?.iter().map(|x| x.ln()).sum())
    }
}

/// In-memory knowledge graph, loadable from JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockKnowledgeSource {
    pub edges: BTreeMap<String, Vec<KgEdge>>,
    /// Symmetric relatedness entries `[a, b, value]`.
    pub relatedness: Vec<(String, String, f64)>,
    /// Nodes whose lookups fail with a backend error.
    pub failing: BTreeSet<String>,
}

impl MockKnowledgeSource {
    pub fn add_edge(&mut self, node: &str, edge: KgEdge) {
        self.edges.entry(normalize_name(node)).or_default().push(edge);
    }

    pub fn set_relatedness(&mut self, a: &str, b: &str, value: f64) {
        self.relatedness.push((normalize_name(a), normalize_name(b), value));
    }

    fn check(&self, node: &str) -> Result<(), AdapterError> {
        if self.failing.contains(node) {
            Err(AdapterError::Backend(format!("lookup of {node} failed")))
        } else {
            Ok(())
        }
    }
}

impl KnowledgeSourceAdapter for MockKnowledgeSource {
    fn has_node(&self, node: &str) -> Result<bool, AdapterError> {
        self.check(node)?;
        Ok(self.edges.contains_key(node) || self.edges.values().flatten().any(|e| e.target == node))
    }

    fn edges(&self, node: &str) -> Result<Vec<KgEdge>, AdapterError> {
        self.check(node)?;
        Ok(self.edges.get(node).cloned().unwrap_or_default())
    }

    fn relatedness(&self, a: &str, b: &str) -> Result<f64, AdapterError> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Ok(1.0);
        }
        Ok(self
            .relatedness
            .iter()
            .find(|(x, y, _)| (x == a && y == b) || (x == b && y == a))
            .map_or(0.0, |(_, _, v)| *v))
    }
}

/// Commonsense completions looked up by normalized text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockCommonsense {
    pub attribute: BTreeMap<String, Vec<String>>,
    pub effect: BTreeMap<String, Vec<String>>,
    pub failing: BTreeSet<String>,
}

impl MockCommonsense {
    pub fn insert(&mut self, text: &str, branch: CommonsenseBranch, completions: &[&str]) {
        let table = match branch {
            CommonsenseBranch::Attribute => &mut self.attribute,
            CommonsenseBranch::Effect => &mut self.effect,
        };
        table.insert(normalize_name(text), completions.iter().map(|s| s.to_string()).collect());
    }
}

impl CommonsenseAdapter for MockCommonsense {
    fn complete(&self, text: &str, branch: CommonsenseBranch) -> Result<Vec<String>, AdapterError> {
        let key = normalize_name(text);
        if self.failing.contains(&key) {
            return Err(AdapterError::Backend(format!("completion of {key:?} failed")));
        }
        let table = match branch {
            CommonsenseBranch::Attribute => &self.attribute,
            CommonsenseBranch::Effect => &self.effect,
        };
        Ok(table.get(&key).cloned().unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::build_mask_prompt;

    #[test]
    fn hash_embedder_is_unit_and_deterministic() {
        let e = HashEmbedder::new(16);
        let a = e.embed("man riding horse").unwrap();
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(a, e.embed("Man, riding horse!").unwrap());
        assert_eq!(e.embed("  ..."), Err(AdapterError::EmptyInput));
    }

    #[test]
    fn detector_learns_targets() {
        let image = ImageRecord { image_id: "im".into(), width: 32, height: 32, uri: "u".into(), descriptors: vec![] };
        let bbox = BoundingBox::new(0, 0, 8, 8).unwrap();
        let targets = [RelationalRegion { descriptor_id: "d".into(), image_id: "im".into(), bbox }];
        let mut det = MockDetector::deriving(1);
        let first = det.train_step(&image, &targets, &["cat on mat".into()]).unwrap();
        let second = det.train_step(&image, &targets, &["cat on mat".into()]).unwrap();
        assert_eq!(first.regression, 1.0);
        assert_eq!(second.regression, 0.0);
        assert!(second.knowledge < first.knowledge);
        assert_eq!(det.propose(&image).unwrap()[0].bbox, bbox);
    }

    #[test]
    fn generator_probabilities() {
        let image = ImageRecord { image_id: "im".into(), width: 32, height: 32, uri: "u".into(), descriptors: vec![] };
        let bbox = BoundingBox::new(0, 0, 8, 8).unwrap();
        let mask = build_mask_prompt(&bbox, 32, 32, 8).unwrap();
        let mut g = TableGenerator::default();
        g.insert("im", bbox, "cat on mat", 0.7);
        let lp = g.token_logprob(&image, &mask, "cat on rug").unwrap();
        assert!((lp - (2.0 * HIT_PROB.ln() + MISS_PROB.ln())).abs() < 1e-12);
        assert_eq!(g.generate(&image, &mask, &DecodingConfig::default()).unwrap(), ("cat on mat".into(), 0.7));
    }

    #[test]
    fn knowledge_source_relatedness_is_symmetric() {
        let mut kg = MockKnowledgeSource::default();
        kg.set_relatedness("plane", "jet", 0.9);
        assert_eq!(kg.relatedness("jet", "plane").unwrap(), 0.9);
        assert_eq!(kg.relatedness("jet", "car").unwrap(), 0.0);
        kg.failing.insert("car".into());
        assert!(kg.edges("car").is_err());
    }
}
