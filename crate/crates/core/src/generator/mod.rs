//! The knowledge generator: variety regularizer, combined objective, mask
//! prompting and the inference contract.

mod decoding;
mod extract;
mod mask;

pub use decoding::{contrastive_search, DecodingConfig, DecodingStrategy, StepModel, TokenCandidate};
pub use extract::{extract_knowledge, Extraction, RegionFailure};
pub use mask::{build_mask_prompt, MaskPrompt};

use crate::adapter::AdapterError;
use crate::corpus::ImageRecord;
use crate::loss::{check_component, LossError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the unit-norm contract of [`SimilarityAdapter::embed`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Text embedding backend for semantic cosine similarity.
pub trait SimilarityAdapter {
    /// Deterministic unit-norm embedding of fixed dimension.
    fn embed(&self, text: &str) -> Result<Vec<f64>, AdapterError>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

/// Cosine similarity of two texts under `adapter`, clamped to [-1, 1].
pub fn pair_similarity(a: &str, b: &str, adapter: &dyn SimilarityAdapter) -> Result<f64, SimilarityError> {
    if a.trim().is_empty() || b.trim().is_empty() {
        return Err(SimilarityError::EmptyText);
    }
    let ea = checked_embed(adapter, a)?;
    let eb = checked_embed(adapter, b)?;
    cosine(&ea, &eb).map_err(SimilarityError::Adapter)
}

pub(crate) fn checked_embed(adapter: &dyn SimilarityAdapter, text: &str) -> Result<Vec<f64>, AdapterError> {
    let v = adapter.embed(text)?;
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(AdapterError::Contract(format!("embedding of {text:?} has norm {norm}")));
    }
    Ok(v)
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> Result<f64, AdapterError> {
    if a.len() != b.len() {
        return Err(AdapterError::Contract(format!("embedding dimensions differ: {} vs {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// `ReLU(-ln(1 - (s - phi)))`: zero up to the margin `phi`, then growing
/// without bound as `s` approaches `1 + phi`.
pub fn variety_penalty(s: f64, phi: f64) -> Result<f64, LossError> {
    let arg = 1.0 - (s - phi);
    if !(arg > 0.0) || !arg.is_finite() {
        return Err(LossError::Domain(arg));
    }
    Ok((-arg.ln()).max(0.0))
}

/// Derivative of [`variety_penalty`] with respect to `s`: `1 / (1 - s + phi)`
/// above the margin, zero below it.
pub fn variety_penalty_grad(s: f64, phi: f64) -> Result<f64, LossError> {
    let arg = 1.0 - (s - phi);
    if !(arg > 0.0) || !arg.is_finite() {
        return Err(LossError::Domain(arg));
    }
    Ok(if s > phi { 1.0 / arg } else { 0.0 })
}

/// How the pairwise penalties of one image are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    /// Mean over all C(n, 2) unordered pairs.
    #[default]
    AllUnorderedPairs,
    /// Sum over unordered pairs divided by the phrase count n.
    PerPhrase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarietyConfig {
    pub phi: f64,
    pub alpha: f64,
    pub pair_mode: PairMode,
}

impl Default for VarietyConfig {
    fn default() -> Self {
        Self { phi: 0.01, alpha: 0.7, pair_mode: PairMode::AllUnorderedPairs }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VarietyError {
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Inter-sequence variety regularizer over the phrases generated for one
/// image. Zero for fewer than two phrases.
pub fn variety_loss(
    phrases: &[String],
    adapter: &dyn SimilarityAdapter,
    config: &VarietyConfig,
) -> Result<f64, VarietyError> {
    let n = phrases.len();
    if n < 2 {
        return Ok(0.0);
    }
    let embeddings = phrases
        .iter()
        .map(|p| {
            if p.trim().is_empty() {
                Err(SimilarityError::EmptyText)
            } else {
                checked_embed(adapter, p).map_err(SimilarityError::from)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let s = cosine(&embeddings[i], &embeddings[j]).map_err(SimilarityError::from)?;
            total += variety_penalty(s, config.phi)?;
        }
    }
    let denom = match config.pair_mode {
        PairMode::AllUnorderedPairs => (n * (n - 1) / 2) as f64,
        PairMode::PerPhrase => n as f64,
    };
    Ok(total / denom)
}

/// `alpha * l_mle + (1 - alpha) * l_v`.
pub fn generator_loss(l_mle: f64, l_v: f64, alpha: f64) -> Result<f64, LossError> {
    check_component("L_MLE", l_mle)?;
    check_component("L_V", l_v)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LossError::AlphaOutOfRange(alpha));
    }
    Ok(alpha * l_mle + (1.0 - alpha) * l_v)
}

/// Backend contract for the vision encoder and text decoder pair.
///
/// Implementations must be deterministic under a fixed seed. One instance
/// serves one request at a time.
pub trait GeneratorAdapter {
    fn mle_loss(&mut self, image: &ImageRecord, mask: &MaskPrompt, target: &str) -> Result<f64, AdapterError>;

    /// Generate one knowledge phrase for the masked region, with a confidence
    /// in [0, 1].
    fn generate(
        &mut self,
        image: &ImageRecord,
        mask: &MaskPrompt,
        decoding: &DecodingConfig,
    ) -> Result<(String, f64), AdapterError>;

    /// Total log-probability of `text` given the prompt; never positive.
    fn token_logprob(&mut self, image: &ImageRecord, mask: &MaskPrompt, text: &str) -> Result<f64, AdapterError>;
}
