//! Pluggable decoding. Contrastive search picks, among the `width` most
//! probable next tokens, the one maximizing
//! `(1 - penalty) * p(v | prefix) - penalty * max_j cos(h_v, h_j)`
//! over the hidden states `h_j` of the tokens produced so far.

use super::cosine;
use crate::adapter::AdapterError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodingStrategy {
    #[default]
    Contrastive,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodingConfig {
    pub strategy: DecodingStrategy,
    /// Candidate width (top-k) for contrastive search.
    pub width: usize,
    /// Degeneration penalty weight.
    pub penalty: f64,
    pub max_tokens: usize,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self { strategy: DecodingStrategy::Contrastive, width: 5, penalty: 0.6, max_tokens: 32 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenCandidate {
    pub token: String,
    pub prob: f64,
    /// Hidden state of the sequence extended by this token.
    pub hidden: Vec<f64>,
}

/// Autoregressive model surface needed by the decoders.
pub trait StepModel {
    fn end_token(&self) -> &str;

    /// Hidden states of the prompt, used as the initial degeneration context.
    fn prompt_hidden(&mut self) -> Result<Vec<Vec<f64>>, AdapterError>;

    /// Next-token candidates for `prefix`, in any order.
    fn step(&mut self, prefix: &[String]) -> Result<Vec<TokenCandidate>, AdapterError>;
}

/// Decode tokens until the end token or `max_tokens`. Returns the tokens
/// (without the end token) and the summed log-probability of the choices.
pub fn contrastive_search(model: &mut dyn StepModel, config: &DecodingConfig) -> Result<(Vec<String>, f64), AdapterError> {
    let mut context = model.prompt_hidden()?;
    let mut tokens: Vec<String> = Vec::new();
    let mut logprob = 0.0;
    while tokens.len() < config.max_tokens {
        let mut candidates = model.step(&tokens)?;
        if candidates.is_empty() {
            break;
        }
        candidates.sort_by(|a, b| b.prob.total_cmp(&a.prob).then_with(|| a.token.cmp(&b.token)));
        let chosen = match config.strategy {
            DecodingStrategy::Greedy => 0,
            DecodingStrategy::Contrastive => {
                candidates.truncate(config.width.max(1));
                let mut best = (0, f64::NEG_INFINITY);
                for (i, c) in candidates.iter().enumerate() {
                    let mut degeneration = 0.0f64;
                    if !context.is_empty() {
                        degeneration = f64::NEG_INFINITY;
                        for h in &context {
                            degeneration = degeneration.max(cosine(&c.hidden, h)?);
                        }
                    }
                    let score = (1.0 - config.penalty) * c.prob - config.penalty * degeneration;
                    if score > best.1 {
                        best = (i, score);
                    }
                }
                best.0
            }
        };
        let pick = candidates.swap_remove(chosen);
        if !(pick.prob > 0.0 && pick.prob <= 1.0) {
            return Err(AdapterError::Contract(format!("token probability {} outside (0, 1]", pick.prob)));
        }
        logprob += pick.prob.ln();
        if pick.token == model.end_token() {
            break;
        }
        context.push(pick.hidden);
        tokens.push(pick.token);
    }
    Ok((tokens, logprob))
}
