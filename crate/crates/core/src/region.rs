//! Relation-centric region labels, the detector objective and region
//! selection at inference time.

use crate::adapter::AdapterError;
use crate::corpus::{BoundingBox, ImageRecord};
use crate::loss::{check_component, LossError};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Default number of regions kept per image at inference.
pub const MAX_REGIONS: usize = 30;

/// Smallest axis-aligned box containing both inputs.
pub fn union_box(a: &BoundingBox, b: &BoundingBox) -> BoundingBox {
    BoundingBox::new(
        a.x_min().min(b.x_min()),
        a.y_min().min(b.y_min()),
        a.x_max().max(b.x_max()),
        a.y_max().max(b.y_max()),
    )
    .expect("union of valid boxes is valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationalRegion {
    pub descriptor_id: String,
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

/// One region per descriptor, covering its subject and object boxes.
pub fn build_relational_regions(image: &ImageRecord) -> Vec<RelationalRegion> {
    image
        .descriptors
        .iter()
        .map(|d| RelationalRegion {
            descriptor_id: d.descriptor_id.clone(),
            image_id: image.image_id.clone(),
            bbox: union_box(&d.subject.bbox, &d.object.bbox),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionProposal {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl RegionProposal {
    pub fn new(bbox: BoundingBox, confidence: f64) -> Result<Self, AdapterError> {
        if (0.0..=1.0).contains(&confidence) {
            Ok(Self { bbox, confidence })
        } else {
            Err(AdapterError::Contract(format!("proposal confidence {confidence} outside [0, 1]")))
        }
    }
}

/// The detector objective: regional regression plus knowledge supervision.
pub fn detector_loss(l_rd: f64, l_k: f64) -> Result<f64, LossError> {
    check_component("L_RD", l_rd)?;
    check_component("L_K", l_k)?;
    Ok(l_rd + l_k)
}

fn proposal_order(a: &RegionProposal, b: &RegionProposal) -> Ordering {
    b.confidence.total_cmp(&a.confidence).then_with(|| a.bbox.as_array().cmp(&b.bbox.as_array()))
}

/// Keep at most `cap` proposals, highest confidence first. Equal confidences
/// are ordered by box coordinates so the result does not depend on input
/// order. A `cap` of zero keeps nothing.
pub fn select_regions(proposals: &[RegionProposal], cap: usize) -> Vec<RegionProposal> {
    let mut sorted = proposals.to_vec();
    sorted.sort_by(proposal_order);
    sorted.truncate(cap);
    sorted
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorLosses {
    pub regression: f64,
    pub knowledge: f64,
}

/// Backend contract for the relational region detector.
///
/// Implementations must be deterministic for a fixed seed and return finite,
/// non-negative losses. An instance serves one caller at a time.
pub trait DetectorAdapter {
    fn propose(&mut self, image: &ImageRecord) -> Result<Vec<RegionProposal>, AdapterError>;

    fn train_step(
        &mut self,
        image: &ImageRecord,
        targets: &[RelationalRegion],
        texts: &[String],
    ) -> Result<DetectorLosses, AdapterError>;
}
