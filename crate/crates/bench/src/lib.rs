//! Synthetic inputs shared by the benchmarks.

use openvik_core::{BoundingBox, Corpus, EntityMention, ImageRecord, Provenance, RelationalDescriptor, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ENTITIES: [&str; 12] = ["man", "woman", "horse", "dog", "ball", "table", "cup", "tree", "car", "street", "hat", "boat"];
// Zipf-ish: earlier relations are drawn far more often.
const RELATIONS: [&str; 10] = ["on", "has", "near", "wearing", "holding", "riding", "behind", "chasing", "eating", "carving"];

fn random_box(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BoundingBox {
    let (x, y) = (rng.gen_range(0..w - 1), rng.gen_range(0..h - 1));
    BoundingBox::new(x, y, rng.gen_range(x + 1..=w), rng.gen_range(y + 1..=h)).expect("ordered corners")
}

/// Seeded corpus with a long-tailed relation distribution.
pub fn synthetic_corpus(images: usize, per_image: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..images)
        .map(|i| {
            let image_id = format!("img{i:05}");
            let descriptors = (0..per_image)
                .map(|k| {
                    let r = RELATIONS[(rng.gen::<f64>().powi(3) * RELATIONS.len() as f64) as usize];
                    let s = ENTITIES[rng.gen_range(0..ENTITIES.len())];
                    let o = ENTITIES[rng.gen_range(0..ENTITIES.len())];
                    RelationalDescriptor {
                        descriptor_id: format!("{image_id}/{k}"),
                        image_id: image_id.clone(),
                        text: format!("{s} {r} {o}"),
                        subject: EntityMention::new(s, random_box(&mut rng, 640, 480)),
                        object: EntityMention::new(o, random_box(&mut rng, 640, 480)),
                        relation: r.to_string(),
                        provenance: Provenance::Original,
                    }
                })
                .collect();
            ImageRecord { image_id: image_id.clone(), width: 640, height: 480, uri: format!("{image_id}.jpg"), descriptors }
        })
        .collect();
    Corpus::new(Split::Train, records)
}

pub fn phrases(corpus: &Corpus) -> Vec<String> {
    corpus.descriptors().map(|d| d.text.clone()).collect()
}
