//! The value function: prompt in, first-token probability out.
//!
//! An [`Oracle`] wraps a [`Backend`] with a persistent [`ValueCache`],
//! bounded concurrency and retry with exponential backoff. Every response is
//! cached under a digest of (model, system prompt, prompt, target), so a warm
//! cache replays a run exactly with the network disabled.

mod backend;
mod cache;
mod http;
mod mock;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coalition::CoalitionMask;
use crate::distribution::{Distribution, OptionSet, TargetSpec};
use crate::error::{Error, Result};
use crate::shapley::Game;
use crate::template::{Bindings, PromptTemplate};

pub use backend::{Backend, Candidate, Completion, CompletionRequest};
pub use cache::{cache_key, CacheRecord, ValueCache, CACHE_FILE};
pub use http::OpenAiBackend;
pub use mock::{
    BoundMock, MockMode, MockModel, ScriptedModel, ScriptedReply, ScriptedToken,
    MOCK_BIND_CAP, MOCK_FILLER_TOKEN,
};

pub const DEFAULT_SYSTEM_PROMPT: &str = "Answer with exactly one option letter.";
pub const DEFAULT_API_KEY_ENV: &str = "BIASPROBE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Backoff before retry number `attempt` (1-based), with jitter in `[0.5, 1]`.
    fn delay(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << (attempt - 1).min(20))
            .min(self.max_delay_ms);
        let jitter: f64 = rand::rng().random_range(0.5..=1.0);
        Duration::from_millis((exp as f64 * jitter) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub endpoint_url: String,
    pub model_id: String,
    /// Fixed for an experiment and recorded (as a digest) in every result.
    pub system_prompt: String,
    pub temperature: f64,
    /// Token requests always ask for exactly this many tokens.
    pub max_output_tokens: u32,
    pub top_candidates: u32,
    pub concurrency_limit: usize,
    pub retry: RetryPolicy,
    pub cache_dir: PathBuf,
    /// Environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1".into(),
            model_id: "gpt-4o".into(),
            system_prompt: DEFAULT_SYSTEM_PROMPT.into(),
            temperature: 0.0,
            max_output_tokens: 1,
            top_candidates: 20,
            concurrency_limit: 4,
            retry: RetryPolicy::default(),
            cache_dir: PathBuf::from(".biasprobe-cache"),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature != 0.0 {
            return Err(Error::InvalidConfig("temperature must be 0".into()));
        }
        if self.max_output_tokens != 1 {
            return Err(Error::InvalidConfig(
                "max_output_tokens is pinned to 1 for token requests".into(),
            ));
        }
        if self.top_candidates < 2 {
            return Err(Error::InvalidConfig("top_candidates must be at least 2".into()));
        }
        if self.concurrency_limit < 1 {
            return Err(Error::InvalidConfig("concurrency_limit must be at least 1".into()));
        }
        if self.retry.max_attempts < 1 {
            return Err(Error::InvalidConfig("retry.max_attempts must be at least 1".into()));
        }
        if self.model_id.is_empty() {
            return Err(Error::InvalidConfig("model_id is empty".into()));
        }
        Ok(())
    }

    pub fn system_prompt_digest(&self) -> String {
        hex::encode(Sha256::digest(self.system_prompt.as_bytes()))
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty())
    }
}

/// Identifies which model and system prompt produced a result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub system_prompt_sha256: String,
    /// Latest response timestamp (Unix seconds) among the responses used.
    pub timestamp: u64,
}

/// A first-token probability read from one response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenObservation {
    pub probability: f64,
    /// The target was absent from the candidates; `probability` is the floor.
    pub floored: bool,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionPreference {
    /// Probabilities exactly as read from the candidate list.
    pub raw: Distribution,
    pub normalized: Distribution,
    #[serde(skip)]
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextResponse {
    pub text: String,
    pub timestamp: u64,
}

/// Counting semaphore bounding in-flight backend calls.
struct Limiter {
    available: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.cv.wait(n).unwrap();
        }
        *n -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Model access with caching, retries and a concurrency bound.
#[derive(Clone)]
pub struct Oracle {
    config: OracleConfig,
    backend: Arc<dyn Backend>,
    cache: Arc<ValueCache>,
    limiter: Arc<Limiter>,
    inflight: Arc<Mutex<HashMap<String, Arc<Mutex<()>>>>>,
    offline: bool,
    network_calls: Arc<AtomicU64>,
}

impl Oracle {
    pub fn new(config: OracleConfig, backend: Arc<dyn Backend>, cache: Arc<ValueCache>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            limiter: Arc::new(Limiter::new(config.concurrency_limit)),
            config,
            backend,
            cache,
            inflight: Arc::new(Mutex::new(HashMap::new())),
            offline: false,
            network_calls: Arc::new(AtomicU64::new(0)),
        })
    }

    /// In offline mode a cache miss is an error instead of a backend call.
    #[must_use]
    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    /// Same backend, cache and limits, different model id.
    #[must_use]
    pub fn with_model(&self, model_id: &str) -> Self {
        let mut other = self.clone();
        other.config.model_id = model_id.to_string();
        other
    }

    /// Same backend, cache and limits, different system prompt.
    #[must_use]
    pub fn with_system_prompt(&self, system_prompt: &str) -> Self {
        let mut other = self.clone();
        other.config.system_prompt = system_prompt.to_string();
        other
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn cache(&self) -> &ValueCache {
        &self.cache
    }

    /// Backend calls made so far, counting retries.
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn provenance(&self, timestamp: u64) -> Provenance {
        Provenance {
            model_id: self.config.model_id.clone(),
            system_prompt_sha256: self.config.system_prompt_digest(),
            timestamp,
        }
    }

    /// Probability of `target` as the first generated token.
    pub fn token_probability(&self, prompt: &str, target: &TargetSpec) -> Result<TokenObservation> {
        let record = self.fetch(prompt, &target.target_token, self.config.max_output_tokens, true)?;
        let found = record
            .raw_top_candidates
            .iter()
            .find(|c| target.matches(&c.token));
        Ok(match found {
            Some(c) => TokenObservation {
                probability: c.logprob.exp().clamp(0.0, 1.0),
                floored: false,
                timestamp: record.timestamp,
            },
            None => TokenObservation {
                probability: target.floor_probability,
                floored: true,
                timestamp: record.timestamp,
            },
        })
    }

    /// Raw and normalized probabilities of every option's answer token, read
    /// from a single response.
    pub fn option_distribution(&self, prompt: &str, options: &OptionSet) -> Result<OptionPreference> {
        let discriminator = format!(
            "options:{}",
            options.iter().map(|o| o.token.as_str()).collect::<Vec<_>>().join("|")
        );
        let record = self.fetch(prompt, &discriminator, self.config.max_output_tokens, true)?;
        let raw = Distribution::new(options.iter().map(|o| {
            let p = record
                .raw_top_candidates
                .iter()
                .find(|c| c.token == o.token)
                .map_or(0.0, |c| c.logprob.exp().clamp(0.0, 1.0));
            (o.label.clone(), p)
        }))?;
        let normalized = raw.normalize()?;
        Ok(OptionPreference {
            raw,
            normalized,
            timestamp: record.timestamp,
        })
    }

    /// Free-text answer of up to `max_tokens` tokens.
    pub fn complete_text(&self, prompt: &str, max_tokens: u32) -> Result<TextResponse> {
        let record = self.fetch(prompt, &format!("text:{max_tokens}"), max_tokens, false)?;
        Ok(TextResponse {
            text: record.text.unwrap_or_default(),
            timestamp: record.timestamp,
        })
    }

    fn fetch(&self, prompt: &str, target: &str, max_tokens: u32, need_logprobs: bool) -> Result<CacheRecord> {
        if prompt.trim().is_empty() {
            return Err(Error::EmptyPrompt);
        }
        let key = cache_key(&self.config.model_id, &self.config.system_prompt, prompt, target);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        if self.offline {
            return Err(Error::CacheMiss { key });
        }

        // Serialize work per key so duplicate renders hit the backend once.
        let key_lock = self
            .inflight
            .lock()
            .unwrap()
            .entry(key.clone())
            .or_default()
            .clone();
        let _held = key_lock.lock().unwrap();
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }

        let request = CompletionRequest {
            model: self.config.model_id.clone(),
            system_prompt: self.config.system_prompt.clone(),
            prompt: prompt.to_string(),
            max_tokens,
            top_logprobs: self.config.top_candidates,
        };
        let completion = self.call_with_retry(&request)?;
        let candidates = match completion.top_candidates {
            Some(c) => c,
            None if need_logprobs => {
                return Err(Error::MalformedResponse("response carries no logprobs".into()))
            }
            None => Vec::new(),
        };
        let probability = if target.starts_with("options:") || target.starts_with("text:") {
            None
        } else {
            Some(
                candidates
                    .iter()
                    .find(|c| c.token == target)
                    .map_or(0.0, |c| c.logprob.exp().clamp(0.0, 1.0)),
            )
        };
        let record = CacheRecord {
            key: key.clone(),
            prompt: prompt.to_string(),
            target: target.to_string(),
            probability,
            raw_top_candidates: candidates,
            timestamp: completion.timestamp,
            model_id: self.config.model_id.clone(),
            text: Some(completion.text),
        };
        let stored = self.cache.insert(record);
        self.inflight.lock().unwrap().remove(&key);
        stored
    }

    fn call_with_retry(&self, request: &CompletionRequest) -> Result<Completion> {
        let policy = &self.config.retry;
        let mut attempt = 1;
        loop {
            let result = {
                let _permit = self.limiter.acquire();
                self.network_calls.fetch_add(1, Ordering::SeqCst);
                self.backend.complete(request)
            };
            match result {
                Err(Error::Network(_)) if attempt < policy.max_attempts => {
                    std::thread::sleep(policy.delay(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// A prompt template scored by an oracle: `v(S)` is the target probability
/// of the prompt rendered from coalition `S`.
pub struct OracleGame<'a> {
    oracle: &'a Oracle,
    template: &'a PromptTemplate,
    bindings: &'a Bindings,
    target: TargetSpec,
    latest_timestamp: AtomicU64,
    floored: AtomicUsize,
}

impl<'a> OracleGame<'a> {
    pub fn new(
        oracle: &'a Oracle,
        template: &'a PromptTemplate,
        bindings: &'a Bindings,
        target: TargetSpec,
    ) -> Self {
        Self {
            oracle,
            template,
            bindings,
            target,
            latest_timestamp: AtomicU64::new(0),
            floored: AtomicUsize::new(0),
        }
    }

    /// Latest response timestamp seen so far.
    pub fn latest_timestamp(&self) -> u64 {
        self.latest_timestamp.load(Ordering::SeqCst)
    }

    /// Coalitions whose target token was missing from the candidates.
    pub fn floored_count(&self) -> usize {
        self.floored.load(Ordering::SeqCst)
    }

    pub fn provenance(&self) -> Provenance {
        self.oracle.provenance(self.latest_timestamp())
    }
}

impl Game for OracleGame<'_> {
    fn player_count(&self) -> usize {
        self.template.player_count()
    }

    fn value(&self, coalition: CoalitionMask) -> Result<f64> {
        let prompt = self.template.render(coalition, self.bindings)?;
        // Nothing left to send: the target gets its floor, as for a miss.
        if prompt.trim().is_empty() {
            self.floored.fetch_add(1, Ordering::SeqCst);
            return Ok(self.target.floor_probability);
        }
        let obs = self.oracle.token_probability(&prompt, &self.target)?;
        self.latest_timestamp.fetch_max(obs.timestamp, Ordering::SeqCst);
        if obs.floored {
            self.floored.fetch_add(1, Ordering::SeqCst);
        }
        Ok(obs.probability)
    }

    fn labels(&self) -> Vec<String> {
        self.template.player_texts()
    }
}

/// `v(S)` for one coalition: render, then cache lookup or model call.
pub fn coalition_value(
    oracle: &Oracle,
    template: &PromptTemplate,
    bindings: &Bindings,
    target: &TargetSpec,
    mask: CoalitionMask,
) -> Result<f64> {
    OracleGame::new(oracle, template, bindings, target.clone()).value(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CostMode {
    Exact,
    Sampled { permutations: u64 },
}

/// Upper bound on fresh model calls for one attribution.
///
/// Exact mode needs every coalition (`2^n`); sampling needs at most one call
/// per player per permutation.
pub fn estimate_cost(player_count: usize, mode: CostMode) -> Result<u64> {
    if player_count == 0 {
        return Err(Error::NoPlayers);
    }
    Ok(match mode {
        CostMode::Exact => 1u64.checked_shl(player_count as u32).unwrap_or(u64::MAX),
        CostMode::Sampled { permutations } => permutations.saturating_mul(player_count as u64),
    })
}
