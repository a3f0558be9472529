//! LLM client contract with record/replay cassettes.

use crate::adapter::AdapterError;
use crate::io::{from_jsonl, to_jsonl};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub phrases: Vec<String>,
}

/// One cassette line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub request: LlmRequest,
    pub response: LlmResponse,
}

pub trait LlmClient {
    fn complete(&mut self, request: &LlmRequest) -> Result<LlmResponse, AdapterError>;
}

/// Replays recorded responses keyed by exact prompt text.
#[derive(Debug, Clone, Default)]
pub struct CassetteLlm {
    entries: BTreeMap<String, LlmResponse>,
}

impl CassetteLlm {
    pub fn new(interactions: impl IntoIterator<Item = Interaction>) -> Self {
        let entries = interactions.into_iter().map(|i| (i.request.prompt, i.response)).collect();
        CassetteLlm { entries }
    }

    pub fn parse(text: &str) -> Result<Self, AdapterError> {
        let items: Vec<Interaction> =
            from_jsonl(text).map_err(|(line, e)| AdapterError::Backend(format!("cassette line {line}: {e}")))?;
        Ok(Self::new(items))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl LlmClient for CassetteLlm {
    fn complete(&mut self, request: &LlmRequest) -> Result<LlmResponse, AdapterError> {
        self.entries.get(&request.prompt).cloned().ok_or_else(|| {
            let head: String = request.prompt.chars().take(60).collect();
            AdapterError::CassetteMiss(head)
        })
    }
}

/// Wraps a live client and keeps every exchange for later replay.
pub struct RecordingLlm<C> {
    inner: C,
    recorded: Vec<Interaction>,
}

impl<C: LlmClient> RecordingLlm<C> {
    pub fn new(inner: C) -> Self {
        RecordingLlm { inner, recorded: Vec::new() }
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.recorded
    }

    pub fn to_cassette(&self) -> String {
        String::from_utf8(to_jsonl(&self.recorded).expect("interactions serialize")).expect("json is utf-8")
    }
}

impl<C: LlmClient> LlmClient for RecordingLlm<C> {
    fn complete(&mut self, request: &LlmRequest) -> Result<LlmResponse, AdapterError> {
        let response = self.inner.complete(request)?;
        self.recorded.push(Interaction { request: request.clone(), response: response.clone() });
        Ok(response)
    }
}
