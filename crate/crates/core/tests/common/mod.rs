#![allow(dead_code)]

use openvik_core::{BoundingBox, Corpus, EntityMention, ImageRecord, Provenance, RelationalDescriptor, Split};

pub fn bx(a: u32, b: u32, c: u32, d: u32) -> BoundingBox {
    BoundingBox::new(a, b, c, d).unwrap()
}

/// Corpus of 100x100 images; each row is `(text, subject, relation, object)`.
pub fn corpus(images: &[(&str, Vec<(String, String, String, String)>)]) -> Corpus {
    let records = images
        .iter()
        .map(|(id, rows)| ImageRecord {
            image_id: id.to_string(),
            width: 100,
            height: 100,
            uri: format!("{id}.jpg"),
            descriptors: rows
                .iter()
                .enumerate()
                .map(|(k, (t, s, r, o))| RelationalDescriptor {
                    descriptor_id: format!("{id}/d{k}"),
                    image_id: id.to_string(),
                    text: t.clone(),
                    subject: EntityMention::new(s, bx(0, 0, 40, 40)),
                    object: EntityMention::new(o, bx(30, 30, 90, 90)),
                    relation: r.clone(),
                    provenance: Provenance::Original,
                })
                .collect(),
        })
        .collect();
    Corpus::new(Split::Train, records)
}

pub fn row(s: &str, r: &str, o: &str) -> (String, String, String, String) {
    (format!("{s} {r} {o}"), s.into(), r.into(), o.into())
}

pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}
