//! Reference-based generation metrics over lowercase alphanumeric tokens.

use super::EvalError;
use crate::text::tokenize;
use std::collections::BTreeMap;

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut m = BTreeMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU with uniform weights up to `max_n`, clipped n-gram
/// precision and the closest-reference brevity penalty.
///
/// Smoothing adds one to numerator and denominator of every order above
/// unigrams; no unigram overlap scores 0.
pub fn bleu(candidate: &str, references: &[&str], max_n: usize) -> Result<f64, EvalError> {
    if references.is_empty() {
        return Err(EvalError::NoReferences);
    }
    if max_n == 0 {
        return Err(EvalError::InvalidParameter("max_n must be at least 1".into()));
    }
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return Err(EvalError::EmptyText);
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();

    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let counts = ngram_counts(&cand, n);
        let mut max_ref: BTreeMap<&[String], usize> = BTreeMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                if let Some(m) = max_ref.get_mut(g) {
                    *m = (*m).max(c);
                } else if counts.contains_key(g) {
                    max_ref.insert(g, c);
                }
            }
        }
        let clipped: usize = counts.iter().map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0))).sum();
        let total = counts.values().sum::<usize>().max(1);
        let p = if n == 1 {
            if clipped == 0 {
                return Ok(0.0);
            }
            clipped as f64 / total as f64
        } else {
            (clipped + 1) as f64 / (total + 1) as f64
        };
        log_sum += p.ln() / max_n as f64;
    }

    let c = cand.len();
    let r = refs.iter().map(Vec::len).min_by_key(|&len| (len.abs_diff(c), len)).expect("references non-empty");
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok((bp * log_sum.exp()).clamp(0.0, 1.0))
}

pub(crate) fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub const ROUGE_BETA: f64 = 1.2;

/// LCS-based F-measure, recall weighted by `beta = 1.2`.
pub fn rouge_l(candidate: &str, reference: &str) -> Result<f64, EvalError> {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return Err(EvalError::EmptyText);
    }
    let lcs = lcs_len(&c, &r);
    if lcs == 0 {
        return Ok(0.0);
    }
    let p = lcs as f64 / c.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    Ok(((1.0 + b2) * p * rec / (rec + b2 * p)).clamp(0.0, 1.0))
}

/// Exact-match METEOR: each candidate token aligns to the earliest unused
/// identical reference token; `Fmean = 10PR / (R + 9P)` scaled by
/// `1 - 0.5 (chunks / matches)^3`. No stemming or synonym stages.
pub fn meteor(candidate: &str, reference: &str) -> Result<f64, EvalError> {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return Err(EvalError::EmptyText);
    }
    let mut used = vec![false; r.len()];
    let mut alignment = Vec::new();
    for (i, tok) in c.iter().enumerate() {
        if let Some(j) = (0..r.len()).find(|&j| !used[j] && &r[j] == tok) {
            used[j] = true;
            alignment.push((i, j));
        }
    }
    let m = alignment.len();
    if m == 0 {
        return Ok(0.0);
    }
    let mut chunks = 1;
    for w in alignment.windows(2) {
        if !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1) {
            chunks += 1;
        }
    }
    let p = m as f64 / c.len() as f64;
    let rec = m as f64 / r.len() as f64;
    let fmean = 10.0 * p * rec / (rec + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    Ok((fmean * (1.0 - penalty)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bleu_identity_and_disjoint() {
        let s = "a man riding a brown horse";
        assert!((bleu(s, &[s], 4).unwrap() - 1.0).abs() < 1e-12);
        assert!(bleu("cat sat", &["dog ran far"], 4).unwrap() < 0.05);
        assert!(matches!(bleu(s, &[], 4), Err(EvalError::NoReferences)));
    }

    #[test]
    fn bleu_short_candidate() {
        // 2 tokens, both matched: p1 = 1, p2 = 2/2, p3 = p4 = 1/2, bp = exp(1 - 3/2)
        let v = bleu("boat on", &["boat on water"], 4).unwrap();
        let expect = (1.0f64 - 1.5).exp() * (0.25f64 * (0.5f64.ln() * 2.0)).exp();
        assert!((v - expect).abs() < 1e-12, "{v} {expect}");
    }

    #[test]
    fn rouge_hand_case() {
        // LCS("a b c d", "a c d") = 3: P = 3/4, R = 1
        let v = rouge_l("a b c d", "a c d").unwrap();
        let (p, r, b2) = (0.75, 1.0, 1.44);
        assert!((v - (1.0 + b2) * p * r / (r + b2 * p)).abs() < 1e-12);
        assert_eq!(rouge_l("x y", "z").unwrap(), 0.0);
        assert!((rouge_l("a b", "a b").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn meteor_hand_alignment() {
        // candidate "the cat sat on the mat", reference "on the mat sat the cat"
        // alignment: the->1, cat->5, sat->3, on->0, the->4, mat->2 ; chunks: every step breaks except none
        let v = meteor("the cat sat on the mat", "on the mat sat the cat").unwrap();
        let m = 6.0;
        let chunks = 6.0;
        let fmean = 1.0;
        let expect = fmean * (1.0 - 0.5 * f64::powi(chunks / m, 3));
        assert!((v - expect).abs() < 1e-12, "{v}");
        assert!(meteor("a man riding horse", "a man riding horse").unwrap() >= 0.99);
        assert_eq!(meteor("x", "y").unwrap(), 0.0);
    }
}
