//! Deterministic stand-ins for a live model.
//!
//! [`MockModel`] is a game over player ordinals, used to check the attribution
//! engines against closed-form answers. Bound to a template it also acts as a
//! [`Backend`], so the whole render, cache and oracle path can run offline.
//! [`ScriptedModel`] is a prompt-level mock configured from JSON, meant for
//! offline battery and CLI runs.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backend::{Backend, Candidate, Completion, CompletionRequest};
use crate::coalition::CoalitionMask;
use crate::error::{Error, Result};
use crate::shapley::Game;
use crate::template::{Bindings, PromptTemplate};

/// Token returned alongside the target so mock candidate lists carry the
/// remaining mass.
pub const MOCK_FILLER_TOKEN: &str = "<other>";

/// Largest template a [`MockModel`] can be bound to as a backend.
pub const MOCK_BIND_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMode {
    /// `clamp(b + sum w_i, 0, 1)`
    LinearClamped,
    /// `1 / (1 + exp(-(b + sum w_i)))`
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockModel {
    pub mode: MockMode,
    pub bias: f64,
    pub weights: Vec<f64>,
}

impl MockModel {
    pub fn linear(bias: f64, weights: impl Into<Vec<f64>>) -> Self {
        Self {
            mode: MockMode::LinearClamped,
            bias,
            weights: weights.into(),
        }
    }

    pub fn logistic(bias: f64, weights: impl Into<Vec<f64>>) -> Self {
        Self {
            mode: MockMode::Logistic,
            bias,
            weights: weights.into(),
        }
    }

    pub fn evaluate(&self, coalition: CoalitionMask) -> f64 {
        let z = self.bias + coalition.players().map(|i| self.weights[i]).sum::<f64>();
        match self.mode {
            MockMode::LinearClamped => z.clamp(0.0, 1.0),
            MockMode::Logistic => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Serves this model's value for `target` on every prompt `template`
    /// renders; any other prompt is rejected.
    pub fn bind(
        self,
        template: &PromptTemplate,
        bindings: &Bindings,
        target: impl Into<String>,
    ) -> Result<BoundMock> {
        let n = template.player_count();
        if n != self.weights.len() {
            return Err(Error::MaskWidthMismatch {
                expected: n,
                got: self.weights.len(),
            });
        }
        if n > MOCK_BIND_CAP {
            return Err(Error::PlayerCapExceeded {
                found: n,
                cap: MOCK_BIND_CAP,
            });
        }
        let mut prompts = HashMap::new();
        for bits in 0..1u64 << n {
            let mask = CoalitionMask::from_bits(bits, n)?;
            prompts
                .entry(template.render(mask, bindings)?)
                .or_insert(mask);
        }
        Ok(BoundMock {
            model: self,
            prompts,
            target: target.into(),
        })
    }
}

impl Game for MockModel {
    fn player_count(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, coalition: CoalitionMask) -> Result<f64> {
        Ok(self.evaluate(coalition))
    }
}

/// A [`MockModel`] answering prompts rendered from one template.
///
/// When two coalitions render to the same text the smaller mask wins.
pub struct BoundMock {
    model: MockModel,
    prompts: HashMap<String, CoalitionMask>,
    target: String,
}

impl Backend for BoundMock {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        let mask = self.prompts.get(&request.prompt).ok_or_else(|| {
            Error::MalformedResponse(format!("mock has no entry for prompt {:?}", request.prompt))
        })?;
        let p = self.model.evaluate(*mask);
        let mut candidates = Vec::new();
        if p > 0.0 {
            candidates.push(Candidate {
                token: self.target.clone(),
                logprob: p.ln(),
            });
        }
        if p < 1.0 {
            candidates.push(Candidate {
                token: MOCK_FILLER_TOKEN.into(),
                logprob: (1.0 - p).ln(),
            });
        }
        candidates.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
        Ok(Completion {
            text: candidates[0].token.clone(),
            top_candidates: Some(candidates),
            timestamp: 0,
        })
    }
}

/// One candidate token of a [`ScriptedModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedToken {
    pub token: String,
    #[serde(default)]
    pub logit: f64,
    /// Added to the logit when the prompt contains the key.
    #[serde(default)]
    pub cues: BTreeMap<String, f64>,
    /// Added once per unit of the first `<integer>%` in the prompt.
    #[serde(default)]
    pub percent_slope: f64,
    /// Added when that percentage is a multiple of `round_multiple`.
    #[serde(default)]
    pub round_bonus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedReply {
    pub contains: String,
    pub text: String,
}

/// Prompt-level mock: first-token probabilities are a softmax over the
/// listed tokens whose logits shift with substrings of the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedModel {
    pub candidates: Vec<ScriptedToken>,
    /// Logit of the unlisted remainder of the vocabulary; `None` gives it no mass.
    #[serde(default)]
    pub residual_logit: Option<f64>,
    #[serde(default = "default_round_multiple")]
    pub round_multiple: u32,
    /// Text replies; the first whose `contains` occurs in the prompt wins.
    #[serde(default)]
    pub replies: Vec<ScriptedReply>,
    /// Reply when no rule matches; defaults to the most likely token.
    #[serde(default)]
    pub default_reply: Option<String>,
}

fn default_round_multiple() -> u32 {
    10
}

impl ScriptedModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        if model.candidates.is_empty() {
            return Err(Error::InvalidConfig("scripted model lists no candidates".into()));
        }
        Ok(model)
    }

    /// Fixed first-token probabilities, independent of the prompt.
    ///
    /// Leftover mass (when the values sum below one) goes to the residual.
    pub fn fixed<T: Into<String>>(probabilities: impl IntoIterator<Item = (T, f64)>) -> Self {
        let candidates: Vec<ScriptedToken> = probabilities
            .into_iter()
            .map(|(t, p)| ScriptedToken {
                token: t.into(),
                logit: p.ln(),
                cues: BTreeMap::new(),
                percent_slope: 0.0,
                round_bonus: 0.0,
            })
            .collect();
        let total: f64 = candidates.iter().map(|c| c.logit.exp()).sum();
        let rest = 1.0 - total;
        Self {
            candidates,
            residual_logit: (rest > 1e-12).then(|| rest.ln()),
            round_multiple: default_round_multiple(),
            replies: Vec::new(),
            default_reply: None,
        }
    }

    fn logits(&self, prompt: &str) -> Vec<f64> {
        let percent = first_percentage(prompt);
        self.candidates
            .iter()
            .map(|c| {
                let mut z = c.logit;
                for (cue, w) in &c.cues {
                    if prompt.contains(cue.as_str()) {
                        z += w;
                    }
                }
                if let Some(x) = percent {
                    z += c.percent_slope * x as f64;
                    if self.round_multiple > 0 && x % self.round_multiple as u64 == 0 {
                        z += c.round_bonus;
                    }
                }
                z
            })
            .collect()
    }
}

impl Backend for ScriptedModel {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        let logits = self.logits(&request.prompt);
        let max = logits
            .iter()
            .copied()
            .chain(self.residual_logit)
            .fold(f64::NEG_INFINITY, f64::max);
        let log_z = max
            + logits
                .iter()
                .copied()
                .chain(self.residual_logit)
                .map(|z| (z - max).exp())
                .sum::<f64>()
                .ln();
        let mut candidates: Vec<Candidate> = self
            .candidates
            .iter()
            .zip(&logits)
            .map(|(c, z)| Candidate {
                token: c.token.clone(),
                logprob: z - log_z,
            })
            .collect();
        candidates.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
        candidates.truncate(request.top_logprobs.max(1) as usize);

        let text = self
            .replies
            .iter()
            .find(|r| request.prompt.contains(r.contains.as_str()))
            .map(|r| r.text.clone())
            .or_else(|| self.default_reply.clone())
            .unwrap_or_else(|| candidates[0].token.clone());
        Ok(Completion {
            text,
            top_candidates: Some(candidates),
            timestamp: 0,
        })
    }
}

/// The first run of digits immediately followed by `%`.
fn first_percentage(prompt: &str) -> Option<u64> {
    let bytes = prompt.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if bytes.get(i) == Some(&b'%') {
                return prompt[start..i].parse().ok();
            }
        } else {
            i += 1;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(prompt: &str) -> CompletionRequest {
        CompletionRequest {
            model: "mock".into(),
            system_prompt: String::new(),
            prompt: prompt.into(),
            max_tokens: 1,
            top_logprobs: 20,
        }
    }

    #[test]
    fn linear_and_logistic_values() {
        let m = MockModel::linear(0.0, [0.1, 0.2, 0.3]);
        let mask = CoalitionMask::from_players([0, 2], 3).unwrap();
        assert!((m.evaluate(mask) - 0.4).abs() < 1e-15);
        assert_eq!(MockModel::linear(0.9, [0.5]).evaluate(CoalitionMask::full(1)), 1.0);
        assert_eq!(MockModel::linear(-0.5, [0.1]).evaluate(CoalitionMask::full(1)), 0.0);
        let l = MockModel::logistic(0.0, [0.0]);
        assert_eq!(l.evaluate(CoalitionMask::empty(1)), 0.5);
    }

    #[test]
    fn bound_mock_answers_rendered_prompts_only() {
        let t = PromptTemplate::parse("Is stock [[B]] a [[good]] pick?").unwrap();
        let mock = MockModel::linear(0.3, [0.4, 0.2])
            .bind(&t, &Bindings::new(), "B")
            .unwrap();
        let c = mock.complete(&request("Is stock a pick?")).unwrap();
        let cands = c.top_candidates.unwrap();
        assert_eq!(cands[0].token, MOCK_FILLER_TOKEN);
        let b = cands.iter().find(|c| c.token == "B").unwrap();
        assert!((b.logprob.exp() - 0.3).abs() < 1e-12);
        assert!(mock.complete(&request("something else")).is_err());
    }

    #[test]
    fn bound_mock_omits_zero_probability_target() {
        let t = PromptTemplate::parse("x [[y]]").unwrap();
        let mock = MockModel::linear(0.0, [0.5]).bind(&t, &Bindings::new(), "B").unwrap();
        let cands = mock.complete(&request("x")).unwrap().top_candidates.unwrap();
        assert!(cands.iter().all(|c| c.token != "B"));
    }

    #[test]
    fn fixed_scripted_model() {
        let m = ScriptedModel::fixed([("A", 0.4), ("B", 0.4)]);
        let c = m.complete(&request("anything")).unwrap();
        let cands = c.top_candidates.unwrap();
        assert_eq!(cands.len(), 2);
        for cand in &cands {
            assert!((cand.logprob.exp() - 0.4).abs() < 1e-12);
        }
        assert_eq!(c.text, "A");
    }

    #[test]
    fn cues_and_percentages() {
        let json = r#"{
            "candidates": [
                {"token": "A", "logit": 0.0, "cues": {"loss": 2.0}},
                {"token": "B", "logit": 1.0, "percent_slope": -0.1, "round_bonus": 0.5}
            ],
            "replies": [{"contains": "Mahesh", "text": "A field medalist"}]
        }"#;
        let m: ScriptedModel = serde_json::from_str(json).unwrap();
        let p = |prompt: &str, token: &str| {
            m.complete(&request(prompt))
                .unwrap()
                .top_candidates
                .unwrap()
                .into_iter()
                .find(|c| c.token == token)
                .unwrap()
                .logprob
                .exp()
        };
        assert!(p("a profit", "B") > p("a loss", "B"));
        assert!(p("loss 10% of", "B") > p("loss 9% of", "B"));
        assert!(p("loss 9% of", "B") > p("loss 11% of", "B"));
        assert_eq!(m.complete(&request("Mahesh is smart")).unwrap().text, "A field medalist");
        assert_eq!(first_percentage("a 12 b 30% c"), Some(30));
        assert_eq!(first_percentage("none"), None);
    }
}
