//! Venn-style comparison of visual, graph and LLM knowledge.

use super::{KgError, Triplet};
use crate::generator::{pair_similarity, SimilarityAdapter};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const MAX_CELL_EXAMPLES: usize = 20;

/// Cell names indexed by membership mask (bit 0 visual, bit 1 KG, bit 2 LLM).
pub const CELL_NAMES: [&str; 8] = ["", "visual", "kg", "visual+kg", "llm", "visual+llm", "kg+llm", "visual+kg+llm"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapCell {
    pub count: usize,
    pub examples: Vec<Triplet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    /// Distinct triplets after cross-set identification.
    pub total: usize,
    pub threshold: f64,
    pub cells: BTreeMap<String, OverlapCell>,
}

impl OverlapReport {
    pub fn count(&self, cell: &str) -> usize {
        self.cells.get(cell).map_or(0, |c| c.count)
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Two triplets denote the same knowledge when their endpoints are identical
/// and their relations reach `threshold` similarity; identity is closed
/// transitively. Each resulting group lands in the cell of the sets that
/// contributed a member.
pub fn overlap_report(
    visual: &[Triplet],
    kg_matched: &[Triplet],
    llm: &[Triplet],
    sim: &dyn SimilarityAdapter,
    threshold: f64,
) -> Result<OverlapReport, KgError> {
    let mut membership: BTreeMap<(String, String, String), u8> = BTreeMap::new();
    for (bit, set) in [visual, kg_matched, llm].into_iter().enumerate() {
        for t in set {
            *membership.entry((t.subject.clone(), t.relation.clone(), t.object.clone())).or_default() |= 1 << bit;
        }
    }
    let items: Vec<_> = membership.into_iter().collect();
    let mut parent: Vec<usize> = (0..items.len()).collect();

    let mut by_endpoints: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, ((s, _, o), _)) in items.iter().enumerate() {
        by_endpoints.entry((s, o)).or_default().push(i);
    }
    for group in by_endpoints.values() {
        for (x, &i) in group.iter().enumerate() {
            for &j in &group[x + 1..] {
                let s = pair_similarity(&items[i].0 .1, &items[j].0 .1, sim)?;
                if s >= threshold {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }

    let mut clusters: BTreeMap<usize, (u8, Vec<usize>)> = BTreeMap::new();
    for i in 0..items.len() {
        let root = find(&mut parent, i);
        let entry = clusters.entry(root).or_default();
        entry.0 |= items[i].1;
        entry.1.push(i);
    }

    let mut cells: BTreeMap<String, OverlapCell> =
        CELL_NAMES[1..].iter().map(|n| (n.to_string(), OverlapCell::default())).collect();
    for (root, (mask, _)) in &clusters {
        let cell = cells.get_mut(CELL_NAMES[*mask as usize]).expect("mask in 1..8");
        cell.count += 1;
        if cell.examples.len() < MAX_CELL_EXAMPLES {
            let ((s, r, o), _) = &items[*root];
            cell.examples.push(Triplet { subject: s.clone(), relation: r.clone(), object: o.clone(), source: None });
        }
    }
    let distinct: BTreeSet<usize> = clusters.keys().copied().collect();
    Ok(OverlapReport { total: distinct.len(), threshold, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::HashEmbedder;

    fn t(s: &str, r: &str, o: &str) -> Triplet {
        Triplet::new(s, r, o).unwrap()
    }

    #[test]
    fn disjoint_sets_fill_exclusive_cells() {
        let emb = HashEmbedder::new(64);
        let r = overlap_report(&[t("a", "on", "b")], &[t("c", "on", "d")], &[t("e", "on", "f")], &emb, 0.75).unwrap();
        assert_eq!((r.count("visual"), r.count("kg"), r.count("llm")), (1, 1, 1));
        assert_eq!(r.total, 3);
        assert_eq!(r.cells.values().map(|c| c.count).sum::<usize>(), 3);
    }

    #[test]
    fn identical_sets_fill_center() {
        let emb = HashEmbedder::new(64);
        let set = [t("a", "on", "b"), t("c", "near", "d")];
        let r = overlap_report(&set, &set, &set, &emb, 0.75).unwrap();
        assert_eq!(r.count("visual+kg+llm"), 2);
        assert_eq!(r.total, 2);
    }

    #[test]
    fn examples_are_capped() {
        let emb = HashEmbedder::new(64);
        let set: Vec<_> = (0..25).map(|i| t(&format!("x{i}"), "on", "y")).collect();
        let r = overlap_report(&set, &[], &[], &emb, 0.75).unwrap();
        assert_eq!(r.count("visual"), 25);
        assert_eq!(r.cells["visual"].examples.len(), MAX_CELL_EXAMPLES);
    }
}
