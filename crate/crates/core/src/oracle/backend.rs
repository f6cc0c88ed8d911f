use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One candidate for the first generated token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub model: String,
    pub system_prompt: String,
    pub prompt: String,
    pub max_tokens: u32,
    pub top_logprobs: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Top candidates for the first generated position; `None` when the
    /// endpoint returned no logprobs.
    pub top_candidates: Option<Vec<Candidate>>,
    /// Unix seconds at which the response was produced.
    pub timestamp: u64,
}

/// Something that can answer a chat completion with first-token logprobs.
///
/// Implementations report transient failures as [`crate::Error::Network`];
/// those are the only errors the oracle retries.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion>;
}
