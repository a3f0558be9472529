//! Pattern-based phrase parsing.
//!
//! Tokens are tagged from small closed-class lexicons plus suffix rules:
//!
//! | tag  | rule                                                                 |
//! |------|----------------------------------------------------------------------|
//! | Det  | articles, demonstratives, possessives, pronouns, wh-words            |
//! | Conj | coordinators; split noun chunks but never relate them               |
//! | Prep | prepositions and spatial particles (`on`, `next`, `behind`, ...)     |
//! | Aux  | forms of *be* / *have*                                               |
//! | Verb | verb lexicon; `-ing` words; `-ed` words directly followed by a Prep  |
//! | Adj  | colour, size, material and number words                              |
//! | Noun | everything else, including listed `-ing` nouns (`building`, ...)     |
//!
//! A triplet is `noun chunk, run of Aux/Verb/Prep, noun chunk`; the head of
//! a noun chunk is its last Noun (or last non-determiner) token. Verbs that
//! open the phrase before any noun (`sitting people on ground`) are kept as
//! modifiers, as are non-head chunk tokens and anything after the object.

use super::Triplet;
use crate::text::tokenize;

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "his", "her", "its", "their", "my", "your", "our", "some", "another",
    "they", "it", "he", "she", "we", "you", "i", "them", "him", "who", "what", "why", "where", "when", "how", "which",
    "here", "there",
];

const CONJUNCTIONS: &[&str] = &["and", "or", "but", "while", "as"];

const PREPOSITIONS: &[&str] = &[
    "on", "in", "at", "of", "near", "with", "by", "under", "above", "below", "behind", "beside", "besides", "next", "to",
    "from", "into", "onto", "over", "across", "along", "around", "against", "between", "inside", "outside", "beneath",
    "atop", "through", "toward", "towards", "for", "up", "down", "off", "out", "about", "upon", "within", "underneath",
    "alongside", "past", "like", "among", "beyond", "via",
];

const AUXILIARIES: &[&str] = &["is", "are", "was", "were", "be", "been", "am", "has", "have", "had", "does", "do", "can"];

const VERBS: &[&str] = &[
    "wears", "wear", "holds", "hold", "carries", "carry", "covers", "cover", "contains", "contain", "rides", "ride",
    "sits", "sit", "stands", "stand", "eats", "eat", "drinks", "drink", "hangs", "hang", "lays", "lay", "lies", "lie",
    "looks", "look", "watches", "watch", "uses", "use", "plays", "play", "says", "say", "flies", "fly", "grows", "grow",
    "supports", "support", "surrounds", "surround", "overlooks", "overlook", "faces", "face", "touches", "touch",
    "rests", "walks", "walk", "runs", "run", "pulls", "pull", "pushes", "push", "throws", "throw", "catches", "catch",
    "parked", "attached", "mounted", "covered", "filled", "made", "painted", "printed", "docked", "piled", "stacked",
    "perched", "placed", "tied", "topped", "built", "worn", "held",
];

const ING_NOUNS: &[&str] = &[
    "thing", "things", "ceiling", "building", "buildings", "painting", "paintings", "clothing", "string", "king", "ring",
    "rings", "wing", "wings", "spring", "railing", "railings", "awning", "icing", "frosting", "pudding", "bedding",
    "siding", "sibling", "morning", "evening", "lightning", "sling", "swing", "swings", "ping", "wedding", "stuffing",
    "topping", "toppings", "seasoning", "dressing", "crossing", "parking", "opening", "landing", "ceiling", "molding",
    "lighting", "sing", "bling", "ding", "sprinkling", "nothing", "something", "anything", "everything",
];

const ED_NOUNS: &[&str] = &["speed", "hundred", "tweed", "breed", "seaweed", "need", "bed", "shed", "sled", "seed", "reed"];

const ADJECTIVES: &[&str] = &[
    "red", "blue", "green", "white", "black", "yellow", "brown", "gray", "grey", "orange", "pink", "purple", "silver",
    "gold", "golden", "dark", "light", "large", "big", "small", "little", "tall", "short", "long", "huge", "tiny", "old",
    "young", "new", "wooden", "metal", "plastic", "glass", "open", "closed", "empty", "full", "cold", "hot", "wet", "dry",
    "thick", "thin", "bright", "clear", "round", "square", "many", "several", "few", "one", "two", "three", "four",
    "five", "six", "seven", "eight", "nine", "ten", "cloudy", "sunny", "blond", "blonde", "colorful", "striped",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Det,
    Conj,
    Prep,
    Aux,
    Verb,
    Adj,
    Noun,
}

impl Tag {
    fn is_relational(self) -> bool {
        matches!(self, Tag::Prep | Tag::Aux | Tag::Verb)
    }
}

fn base_tag(tok: &str) -> Tag {
    if DETERMINERS.contains(&tok) {
        Tag::Det
    } else if CONJUNCTIONS.contains(&tok) {
        Tag::Conj
    } else if PREPOSITIONS.contains(&tok) {
        Tag::Prep
    } else if AUXILIARIES.contains(&tok) {
        Tag::Aux
    } else if VERBS.contains(&tok) {
        Tag::Verb
    } else if ADJECTIVES.contains(&tok) {
        Tag::Adj
    } else if tok.len() >= 5 && tok.ends_with("ing") && !ING_NOUNS.contains(&tok) {
        Tag::Verb
    } else {
        Tag::Noun
    }
}

fn is_ed_form(tok: &str) -> bool {
    tok.len() >= 5 && tok.ends_with("ed") && !ED_NOUNS.contains(&tok)
}

/// Tag each token. `-ed` forms count as verbs only when a preposition
/// follows (`docked at`), otherwise they modify a noun (`striped shirt`).
pub fn tag_tokens(tokens: &[String]) -> Vec<Tag> {
    let mut tags: Vec<Tag> = tokens.iter().map(|t| base_tag(t)).collect();
    for i in 0..tokens.len() {
        if tags[i] == Tag::Noun && is_ed_form(&tokens[i]) && tags.get(i + 1) == Some(&Tag::Prep) {
            tags[i] = Tag::Verb;
        }
    }
    tags
}

/// A parsed phrase: its triplet plus leftover modifier tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPhrase {
    pub triplet: Triplet,
    pub modifiers: Vec<String>,
}

fn head_index(tokens: &[String], tags: &[Tag], range: std::ops::Range<usize>) -> Option<usize> {
    let candidates = || range.clone().filter(|&i| !matches!(tags[i], Tag::Det | Tag::Conj));
    candidates().filter(|&i| tags[i] == Tag::Noun).last().or_else(|| candidates().last()).filter(|&i| !tokens[i].is_empty())
}

/// Extract `(subject, relation, object)` from a free-form phrase, or `None`
/// when no relation word sits between two noun chunks.
pub fn parse_triplet(text: &str) -> Option<ParsedPhrase> {
    let tokens = tokenize(text);
    let tags = tag_tokens(&tokens);
    let n = tokens.len();
    let mut modifiers = Vec::new();

    // leading participles before the first noun-ish token are modifiers
    let mut i = 0;
    while i < n && tags[i].is_relational() {
        modifiers.push(tokens[i].clone());
        i += 1;
    }
    let subj_start = i;
    while i < n && !tags[i].is_relational() {
        i += 1;
    }
    let subj_end = i;
    while i < n && tags[i].is_relational() {
        i += 1;
    }
    let (rel_start, rel_end) = (subj_end, i);
    while i < n && !tags[i].is_relational() {
        i += 1;
    }
    let obj_end = i;

    let subj = head_index(&tokens, &tags, subj_start..subj_end)?;
    if rel_start == rel_end {
        return None;
    }
    let obj = head_index(&tokens, &tags, rel_end..obj_end)?;

    for k in (subj_start..subj_end).chain(rel_end..obj_end) {
        if k != subj && k != obj && !matches!(tags[k], Tag::Det | Tag::Conj) {
            modifiers.push(tokens[k].clone());
        }
    }
    modifiers.extend(tokens[obj_end..].iter().cloned());

    Some(ParsedPhrase {
        triplet: Triplet {
            subject: tokens[subj].clone(),
            relation: tokens[rel_start..rel_end].join(" "),
            object: tokens[obj].clone(),
            source: None,
        },
        modifiers,
    })
}

/// Head of every noun chunk, in order of first appearance, without repeats.
pub fn noun_heads(text: &str) -> Vec<String> {
    let tokens = tokenize(text);
    let tags = tag_tokens(&tokens);
    let mut heads: Vec<String> = Vec::new();
    let mut start = 0;
    for end in 0..=tokens.len() {
        if end == tokens.len() || tags[end].is_relational() || tags[end] == Tag::Conj {
            if let Some(h) = head_index(&tokens, &tags, start..end) {
                if !heads.contains(&tokens[h]) {
                    heads.push(tokens[h].clone());
                }
            }
            start = end + 1;
        }
    }
    heads
}

/// Ordered entity pairs `(a, b)` with `a` mentioned before `b`.
pub fn entity_pairs(text: &str) -> Vec<(String, String)> {
    let heads = noun_heads(text);
    let mut pairs = Vec::new();
    for i in 0..heads.len() {
        for j in i + 1..heads.len() {
            pairs.push((heads[i].clone(), heads[j].clone()));
        }
    }
    pairs
}

/// Content verbs (not auxiliaries) in order of appearance.
pub fn main_verbs(text: &str) -> Vec<String> {
    let tokens = tokenize(text);
    let tags = tag_tokens(&tokens);
    let mut out: Vec<String> = Vec::new();
    for (t, tag) in tokens.iter().zip(tags) {
        if tag == Tag::Verb && !out.contains(t) {
            out.push(t.clone());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhraseAnalysis {
    pub nouns: usize,
    /// Relation-word runs that sit between two noun chunks.
    pub relations: usize,
}

/// Noun and relation counts used by the query filters.
pub fn analyze(text: &str) -> PhraseAnalysis {
    let tokens = tokenize(text);
    let tags = tag_tokens(&tokens);
    let nouns = tags.iter().filter(|t| **t == Tag::Noun).count();
    let mut relations = 0;
    let mut seen_noun = false;
    let mut pending = false;
    for tag in &tags {
        match tag {
            t if t.is_relational() => pending = seen_noun,
            Tag::Noun | Tag::Adj => {
                if pending {
                    relations += 1;
                    pending = false;
                }
                seen_noun = true;
            }
            _ => {}
        }
    }
    PhraseAnalysis { nouns, relations }
}
