use super::{AppError, KnowledgeIndex, MatchAdapter};
use crate::diversify::{KnowledgeSourceAdapter, RELATEDNESS_THRESHOLD};
use crate::text::{normalize, tokenize};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

const EXACT_VERBS: &str = include_str!("../../data/verbs_exact.txt");
const FUZZY_VERBS: &str = include_str!("../../data/verbs_fuzzy.txt");

/// Situation verbs split by how their synonyms are resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbLists {
    pub exact: BTreeSet<String>,
    pub fuzzy: BTreeSet<String>,
}

impl VerbLists {
    /// One word per line; blank lines ignored.
    pub fn parse(exact: &str, fuzzy: &str) -> Self {
        let read = |t: &str| t.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_lowercase).collect();
        VerbLists { exact: read(exact), fuzzy: read(fuzzy) }
    }

    pub fn builtin() -> Self {
        Self::parse(EXACT_VERBS, FUZZY_VERBS)
    }
}

/// Crude suffix stemmer used for fuzzy verb matching.
pub fn stem(word: &str) -> String {
    let mut w = word.to_lowercase();
    for suffix in ["ing", "ed", "es", "s"] {
        if w.len() >= suffix.len() + 3 && w.ends_with(suffix) {
            w.truncate(w.len() - suffix.len());
            break;
        }
    }
    if w.len() > 3 && w.ends_with('e') {
        w.pop();
    }
    let b = w.as_bytes();
    if b.len() > 3 && b[b.len() - 1] == b[b.len() - 2] && !b"aeiou".contains(&b[b.len() - 1]) {
        w.pop();
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynonymMatch {
    Exact,
    Stem,
    Relatedness,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorSet {
    pub verb: String,
    pub descriptors: Vec<String>,
    pub matched: SynonymMatch,
}

impl DescriptorSet {
    pub fn original(verb: &str) -> String {
        format!("An image of {verb}")
    }
}

/// Start from `An image of <verb>` and add the most frequent knowledge
/// phrase whose relation carries the verb (or its nearest synonym) and whose
/// subject or object is among `objects`. Synonyms are tried in order: exact
/// relation token, stem match for fuzzy-list verbs, then graph relatedness
/// at or above 0.85.
pub fn gsr_descriptor_set(
    verb: &str,
    index: &KnowledgeIndex,
    objects: &BTreeSet<String>,
    verbs: &VerbLists,
    kg: Option<&dyn KnowledgeSourceAdapter>,
) -> Result<DescriptorSet, AppError> {
    let verb = normalize(verb);
    if verb.is_empty() {
        return Err(AppError::InvalidInput("verb must not be empty".into()));
    }
    let mut set = DescriptorSet { verb: verb.clone(), descriptors: vec![DescriptorSet::original(&verb)], matched: SynonymMatch::None };

    let verb_stem = stem(&verb);
    let verb_ref = verb.as_str();
    let mut stages: Vec<(SynonymMatch, Box<dyn Fn(&str) -> Result<bool, AppError> + '_>)> = vec![
        (SynonymMatch::Exact, Box::new(move |tok: &str| Ok(tok == verb_ref))),
    ];
    if verbs.fuzzy.contains(&verb) {
        stages.push((SynonymMatch::Stem, Box::new(|tok: &str| Ok(stem(tok) == verb_stem))));
    }
    if let Some(kg) = kg {
        stages.push((
            SynonymMatch::Relatedness,
            Box::new(move |tok: &str| Ok(kg.relatedness(verb_ref, tok)? >= RELATEDNESS_THRESHOLD)),
        ));
    }

    for (kind, accepts) in stages {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for (relation, rows) in index.relations() {
            let mut hit = false;
            for tok in tokenize(relation) {
                if accepts(&tok)? {
                    hit = true;
                    break;
                }
            }
            if !hit {
                continue;
            }
            for (text, s, o) in rows {
                if objects.contains(s) || objects.contains(o) {
                    *counts.entry(text.clone()).or_default() += 1;
                }
            }
        }
        // max count, lexicographically smallest text on ties
        let best = counts.into_iter().fold(None::<(String, usize)>, |acc, (t, c)| match acc {
            Some((bt, bc)) if bc >= c => Some((bt, bc)),
            _ => Some((t, c)),
        });
        if let Some((text, _)) = best {
            set.descriptors.push(text);
            set.matched = kind;
            break;
        }
    }
    Ok(set)
}

/// Mean match score of the image against every descriptor in the set.
pub fn gsr_score(image_id: &str, set: &DescriptorSet, adapter: &dyn MatchAdapter) -> Result<f64, AppError> {
    if set.descriptors.is_empty() {
        return Err(AppError::InvalidInput(format!("descriptor set for {} is empty", set.verb)));
    }
    let mut total = 0.0;
    for d in &set.descriptors {
        total += adapter.score(image_id, d)?;
    }
    Ok(total / set.descriptors.len() as f64)
}

/// Highest-scoring verb; the earliest set wins ties.
pub fn predict_verb(image_id: &str, sets: &[DescriptorSet], adapter: &dyn MatchAdapter) -> Result<(String, f64), AppError> {
    let mut best: Option<(String, f64)> = None;
    for set in sets {
        let s = gsr_score(image_id, set, adapter)?;
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((set.verb.clone(), s));
        }
    }
    best.ok_or_else(|| AppError::InvalidInput("no candidate verbs".into()))
}
