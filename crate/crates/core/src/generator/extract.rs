use super::{build_mask_prompt, DecodingConfig, GeneratorAdapter};
use crate::adapter::AdapterError;
use crate::corpus::{BoundingBox, ImageRecord, KnowledgePhrase, PhraseOrigin};
use crate::region::{select_regions, DetectorAdapter};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFailure {
    pub image_id: String,
    pub region: BoundingBox,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub phrases: Vec<KnowledgePhrase>,
    pub failures: Vec<RegionFailure>,
}

/// Detect up to `cap` relational regions and generate one phrase for each.
///
/// A proposal failure aborts the image. A failure on an individual region is
/// recorded and the remaining regions are still processed.
pub fn extract_knowledge(
    image: &ImageRecord,
    detector: &mut dyn DetectorAdapter,
    generator: &mut dyn GeneratorAdapter,
    decoding: &DecodingConfig,
    patch_size: u32,
    cap: usize,
) -> Result<Extraction, AdapterError> {
    let proposals = detector.propose(image)?;
    let mut out = Extraction::default();
    for (rank, proposal) in select_regions(&proposals, cap).into_iter().enumerate() {
        let fail = |error: String| RegionFailure { image_id: image.image_id.clone(), region: proposal.bbox, error };
        let mask = match build_mask_prompt(&proposal.bbox, image.width, image.height, patch_size) {
            Ok(m) => m,
            Err(e) => {
                out.failures.push(fail(e.to_string()));
                continue;
            }
        };
        match generator.generate(image, &mask, decoding) {
            Ok((text, _)) if text.trim().is_empty() => out.failures.push(fail("generator returned empty text".into())),
            Ok((_, confidence)) if !(0.0..=1.0).contains(&confidence) => {
                out.failures.push(fail(format!("confidence {confidence} outside [0, 1]")))
            }
            Ok((text, confidence)) => out.phrases.push(KnowledgePhrase {
                phrase_id: format!("{}#k{:02}", image.image_id, rank),
                image_id: image.image_id.clone(),
                region: proposal.bbox,
                text,
                confidence: Some(confidence),
                origin: PhraseOrigin::Generated,
            }),
            Err(e) => out.failures.push(fail(e.to_string())),
        }
    }
    Ok(out)
}
