use super::{CommonsenseAdapter, CommonsenseBranch, KgEdge, KnowledgeSourceAdapter, RelationScoreTable};
use crate::corpus::{normalize_name, BoundingBox, Corpus, EntityMention, ImageRecord, Provenance, RelationalDescriptor};
use crate::kg::noun_heads;
use crate::region::union_box;
use crate::text::normalize;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

/// Minimum relatedness for swapping in a similar entity.
pub const RELATEDNESS_THRESHOLD: f64 = 0.85;

/// Edges must be strictly heavier than this to be used for augmentation.
const MIN_EDGE_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentFailure {
    pub image_id: String,
    pub subject: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Augmentation {
    pub descriptors: Vec<RelationalDescriptor>,
    pub failures: Vec<AugmentFailure>,
}

fn triple_key(d: &RelationalDescriptor) -> (String, String, String) {
    (d.subject.name.clone(), d.relation.clone(), d.object.name.clone())
}

/// Complement relations between the entities of every important
/// descriptor (score at or above `high_threshold`) with knowledge-source
/// edges heavier than 1. Triples already present in the image are skipped.
pub fn augment_relations(
    corpus: &Corpus,
    table: &RelationScoreTable,
    kg: &dyn KnowledgeSourceAdapter,
    high_threshold: f64,
) -> Augmentation {
    let mut out = Augmentation::default();
    for image in corpus.images() {
        let mut seen: HashSet<_> = image.descriptors.iter().map(triple_key).collect();
        let mut edge_cache: HashMap<String, Option<Vec<KgEdge>>> = HashMap::new();
        for d in &image.descriptors {
            if !table.score(&d.relation).is_some_and(|s| s >= high_threshold) {
                continue;
            }
            let mut entities = vec![d.subject.name.clone(), d.object.name.clone()];
            for head in noun_heads(&d.text) {
                if !entities.contains(&head) {
                    entities.push(head);
                }
            }
            let region = union_box(&d.subject.bbox, &d.object.bbox);
            let box_for = |name: &str| -> BoundingBox {
                if name == d.subject.name {
                    d.subject.bbox
                } else if name == d.object.name {
                    d.object.bbox
                } else {
                    region
                }
            };
            let mut emitted = 0;
            for a in &entities {
                let edges = edge_cache.entry(a.clone()).or_insert_with(|| {
                    let fetched = kg.has_node(a).and_then(|known| if known { kg.edges(a) } else { Ok(Vec::new()) });
                    match fetched {
                        Ok(e) => Some(e),
                        Err(e) => {
                            out.failures.push(AugmentFailure {
                                image_id: image.image_id.clone(),
                                subject: a.clone(),
                                error: e.to_string(),
                            });
                            None
                        }
                    }
                });
                let Some(edges) = edges else { continue };
                for edge in edges.iter() {
                    let target = normalize_name(&edge.target);
                    if target == *a || !entities.contains(&target) || !(edge.weight > MIN_EDGE_WEIGHT) {
                        continue;
                    }
                    let relation = normalize_name(&edge.relation);
                    if relation.is_empty() || !seen.insert((a.clone(), relation.clone(), target.clone())) {
                        continue;
                    }
                    out.descriptors.push(RelationalDescriptor {
                        descriptor_id: format!("{}+r{}", d.descriptor_id, emitted),
                        image_id: image.image_id.clone(),
                        text: format!("{a} {relation} {target}"),
                        subject: EntityMention { name: a.clone(), bbox: box_for(a) },
                        object: EntityMention { name: target.clone(), bbox: box_for(&target) },
                        relation,
                        provenance: Provenance::RelationAugmented,
                    });
                    emitted += 1;
                }
            }
        }
    }
    out
}

/// Replace whole-word occurrences of `from` (case-insensitive) with `to`.
/// Returns `None` when `from` does not occur.
fn replace_word(text: &str, from: &str, to: &str) -> Option<String> {
    let lower = text.to_lowercase();
    if lower.len() != text.len() || from.is_empty() {
        return None;
    }
    let bytes = lower.as_bytes();
    let is_word = |i: usize| bytes.get(i).is_some_and(|b| b.is_ascii_alphanumeric());
    let mut out = String::new();
    let mut last = 0;
    let mut found = false;
    for (pos, _) in lower.match_indices(from) {
        if pos < last || (pos > 0 && is_word(pos - 1)) || is_word(pos + from.len()) {
            continue;
        }
        out.push_str(&text[last..pos]);
        out.push_str(to);
        last = pos + from.len();
        found = true;
    }
    found.then(|| {
        out.push_str(&text[last..]);
        out
    })
}

fn best_descriptor<'a>(image: &'a ImageRecord, table: &RelationScoreTable) -> Option<&'a RelationalDescriptor> {
    let mut best: Option<(&RelationalDescriptor, f64)> = None;
    for d in &image.descriptors {
        let s = table.score(&d.relation).unwrap_or(f64::NEG_INFINITY);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((d, s));
        }
    }
    best.map(|(d, _)| d)
}

/// Entity and attribute enrichment of each image's highest-scoring
/// descriptor.
///
/// Knowledge-source neighbours of the object whose relatedness reaches
/// `relatedness_threshold` replace the object in entity-augmented copies.
/// Commonsense completions are attached to the description: attribute
/// completions in front, effect completions after.
pub fn augment_entities(
    corpus: &Corpus,
    table: &RelationScoreTable,
    kg: &dyn KnowledgeSourceAdapter,
    commonsense: &dyn CommonsenseAdapter,
    relatedness_threshold: f64,
) -> Augmentation {
    let mut out = Augmentation::default();
    for image in corpus.images() {
        let Some(d) = best_descriptor(image, table) else { continue };
        let mut texts: HashSet<String> = image.descriptors.iter().map(|x| normalize(&x.text)).collect();
        let fail = |subject: &str, e: crate::adapter::AdapterError| AugmentFailure {
            image_id: image.image_id.clone(),
            subject: subject.to_string(),
            error: e.to_string(),
        };
        let mut emitted = 0;
        let mut emit = |out: &mut Augmentation, text: String, object: EntityMention, provenance: Provenance| {
            if texts.insert(normalize(&text)) {
                out.descriptors.push(RelationalDescriptor {
                    descriptor_id: format!("{}+e{}", d.descriptor_id, emitted),
                    image_id: image.image_id.clone(),
                    text,
                    subject: d.subject.clone(),
                    object,
                    relation: d.relation.clone(),
                    provenance,
                });
                emitted += 1;
            }
        };

        let object = &d.object.name;
        let neighbours = kg.has_node(object).and_then(|known| if known { kg.edges(object) } else { Ok(Vec::new()) });
        match neighbours {
            Ok(edges) => {
                let mut candidates: Vec<String> = Vec::new();
                for e in edges {
                    let t = normalize_name(&e.target);
                    if !t.is_empty() && t != *object && t != d.subject.name && !candidates.contains(&t) {
                        candidates.push(t);
                    }
                }
                for cand in candidates {
                    match kg.relatedness(object, &cand) {
                        Ok(r) if r >= relatedness_threshold => {
                            let text = replace_word(&d.text, object, &cand)
                                .unwrap_or_else(|| format!("{} {} {}", d.subject.name, d.relation, cand));
                            let mention = EntityMention { name: cand, bbox: d.object.bbox };
                            emit(&mut out, text, mention, Provenance::EntityAugmented);
                        }
                        Ok(_) => {}
                        Err(e) => out.failures.push(fail(&cand, e)),
                    }
                }
            }
            Err(e) => out.failures.push(fail(object, e)),
        }

        for branch in [CommonsenseBranch::Attribute, CommonsenseBranch::Effect] {
            match commonsense.complete(&d.text, branch) {
                Ok(phrases) => {
                    for p in phrases.iter().map(|p| p.trim()).filter(|p| !p.is_empty()) {
                        let text = match branch {
                            CommonsenseBranch::Attribute => format!("{p} {}", d.text),
                            CommonsenseBranch::Effect => format!("{} {p}", d.text),
                        };
                        emit(&mut out, text, d.object.clone(), Provenance::AttributeAugmented);
                    }
                }
                Err(e) => out.failures.push(fail(&d.text, e)),
            }
        }
    }
    out
}
