use super::RelationScoreTable;
use crate::corpus::{dedup_corpus, Corpus, ImageRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropConfig {
    /// Descriptors whose relation scores at or below this are eligible.
    pub low_threshold: f64,
    pub drop_rate: f64,
    /// Stop once at most this fraction of the original descriptors remain.
    pub target_fraction: f64,
    pub seed: u64,
    pub max_passes: usize,
}

impl Default for DropConfig {
    fn default() -> Self {
        Self { low_threshold: 0.4, drop_rate: 0.5, target_fraction: 0.6, seed: 0, max_passes: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct DropOutcome {
    pub corpus: Corpus,
    pub passes: usize,
    pub dropped: usize,
}

/// Randomly drop low-importance descriptors until the corpus shrinks to
/// `target_fraction` of its original descriptor count.
///
/// The input is deduplicated first. Passes walk images and descriptors in
/// order; each eligible descriptor consumes one uniform draw and is dropped
/// when the draw is below `drop_rate`. The walk stops as soon as the target
/// is met, after `max_passes`, or when nothing eligible is left. Relations
/// missing from `table` are never dropped.
pub fn random_drop(corpus: &Corpus, table: &RelationScoreTable, config: &DropConfig) -> DropOutcome {
    let original = corpus.descriptor_count();
    let deduped = dedup_corpus(corpus);
    let target = config.target_fraction * original as f64;
    let eligible = |rel: &str| table.score(rel).is_some_and(|s| s <= config.low_threshold);

    let mut keep: Vec<Vec<bool>> = deduped.images().iter().map(|i| vec![true; i.descriptors.len()]).collect();
    let mut count = deduped.descriptor_count();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut passes = 0;

    'passes: while (count as f64) > target && passes < config.max_passes {
        passes += 1;
        let mut visited_eligible = false;
        for (img, mask) in deduped.images().iter().zip(keep.iter_mut()) {
            for (d, kept) in img.descriptors.iter().zip(mask.iter_mut()) {
                if (count as f64) <= target {
                    break 'passes;
                }
                if !*kept || !eligible(&d.relation) {
                    continue;
                }
                visited_eligible = true;
                if rng.gen::<f64>() < config.drop_rate {
                    *kept = false;
                    count -= 1;
                }
            }
        }
        if !visited_eligible {
            break;
        }
    }

    let images = deduped
        .images()
        .iter()
        .zip(&keep)
        .map(|(img, mask)| ImageRecord {
            descriptors: img.descriptors.iter().zip(mask).filter(|(_, k)| **k).map(|(d, _)| d.clone()).collect(),
            ..img.clone()
        })
        .collect();
    let out = Corpus::new(corpus.split(), images);
    DropOutcome { dropped: deduped.descriptor_count() - out.descriptor_count(), corpus: out, passes }
}
