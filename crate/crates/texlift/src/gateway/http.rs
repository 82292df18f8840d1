//! Thin network adapters for live predictors and scorers.
//!
//! Three wire protocols are spoken: chat-completions and messages-style
//! endpoints for predictors, and an echo-logprob completions endpoint for
//! scorers (the prompt is resubmitted with `echo` and zero new tokens, and
//! the response carries one log-probability per prompt token). Credentials
//! come from environment variables named in the provider config; offline
//! runs never construct these types.

use super::{GatewayError, Predictor, PredictorSetting, RawForecast, ReasoningEffort, ScoredToken, Scorer};
use crate::config::{ProviderEntry, ProviderKind};
use serde_json::{json, Value};
use std::time::Duration;

fn provider_err(provider: &str, message: impl ToString) -> GatewayError {
    GatewayError::Provider {
        provider: provider.to_string(),
        message: message.to_string(),
    }
}

fn api_key(provider: &ProviderEntry) -> Result<String, GatewayError> {
    std::env::var(&provider.api_key_env)
        .map_err(|_| GatewayError::MissingCredential(provider.api_key_env.clone()))
}

fn client() -> Result<reqwest::blocking::Client, GatewayError> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(300))
        .build()
        .map_err(|e| provider_err("http", e))
}

/// POST a JSON body and parse the JSON reply; non-2xx becomes a provider
/// error carrying the response text (these are the retryable failures).
fn post_json(
    client: &reqwest::blocking::Client,
    provider_id: &str,
    url: &str,
    headers: &[(&str, &str)],
    body: &Value,
) -> Result<Value, GatewayError> {
    let mut req = client.post(url).json(body);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let resp = req.send().map_err(|e| provider_err(provider_id, e))?;
    let status = resp.status();
    let text = resp.text().map_err(|e| provider_err(provider_id, e))?;
    if !status.is_success() {
        return Err(provider_err(
            provider_id,
            format!("HTTP {status}: {}", text.chars().take(400).collect::<String>()),
        ));
    }
    serde_json::from_str(&text).map_err(|e| provider_err(provider_id, format!("bad JSON: {e}")))
}

/// A forecast-writing model behind a chat- or messages-style endpoint.
pub struct HttpPredictor {
    id: String,
    provider_id: String,
    kind: ProviderKind,
    base_url: String,
    key: String,
    setting: PredictorSetting,
    client: reqwest::blocking::Client,
}

impl HttpPredictor {
    pub fn new(
        id: &str,
        provider_id: &str,
        provider: &ProviderEntry,
        setting: PredictorSetting,
    ) -> Result<Self, GatewayError> {
        if provider.kind == ProviderKind::FireworksCompletions {
            return Err(provider_err(
                provider_id,
                "completions-style providers score, they do not predict",
            ));
        }
        Ok(Self {
            id: id.to_string(),
            provider_id: provider_id.to_string(),
            kind: provider.kind,
            base_url: provider.base_url.trim_end_matches('/').to_string(),
            key: api_key(provider)?,
            setting,
            client: client()?,
        })
    }

    fn generate_chat(&self, prompt: &str) -> Result<RawForecast, GatewayError> {
        let mut body = json!({
            "model": self.setting.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.setting.temperature,
        });
        if self.setting.reasoning_effort != ReasoningEffort::None {
            body["reasoning_effort"] = json!(self.setting.reasoning_effort.to_string());
        }
        let url = format!("{}/chat/completions", self.base_url);
        let auth = format!("Bearer {}", self.key);
        let v = post_json(
            &self.client,
            &self.provider_id,
            &url,
            &[("authorization", &auth)],
            &body,
        )?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| provider_err(&self.provider_id, "missing message content"))?
            .to_string();
        Ok(RawForecast {
            text,
            hidden_reasoning_tokens: v["usage"]["completion_tokens_details"]["reasoning_tokens"]
                .as_u64(),
            visible_tokens: v["usage"]["completion_tokens"].as_u64(),
        })
    }

    fn generate_messages(&self, prompt: &str) -> Result<RawForecast, GatewayError> {
        let thinking_budget = match self.setting.reasoning_effort {
            ReasoningEffort::None => None,
            ReasoningEffort::Low => Some(2_048u64),
            ReasoningEffort::Medium => Some(8_192),
            ReasoningEffort::High => Some(16_384),
        };
        // The visible budget must leave room on top of the thinking budget.
        let max_tokens =
            thinking_budget.unwrap_or(0) + (self.setting.max_forecast_chars as u64).max(1_024);
        let mut body = json!({
            "model": self.setting.model_id,
            "max_tokens": max_tokens,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.setting.temperature,
        });
        if let Some(budget) = thinking_budget {
            body["thinking"] = json!({"type": "enabled", "budget_tokens": budget});
        }
        let url = format!("{}/v1/messages", self.base_url);
        let v = post_json(
            &self.client,
            &self.provider_id,
            &url,
            &[("x-api-key", &self.key), ("anthropic-version", "2023-06-01")],
            &body,
        )?;
        let blocks = v["content"]
            .as_array()
            .ok_or_else(|| provider_err(&self.provider_id, "missing content array"))?;
        let text: String = blocks
            .iter()
            .filter(|b| b["type"] == "text")
            .filter_map(|b| b["text"].as_str())
            .collect();
        Ok(RawForecast {
            text,
            // The endpoint reports visible output only; hidden reasoning
            // token counts are not exposed.
            hidden_reasoning_tokens: None,
            visible_tokens: v["usage"]["output_tokens"].as_u64(),
        })
    }
}

impl Predictor for HttpPredictor {
    fn id(&self) -> &str {
        &self.id
    }

    fn setting(&self) -> PredictorSetting {
        self.setting.clone()
    }

    fn generate(
        &self,
        prompt: &str,
        _true_continuation: Option<&str>,
    ) -> Result<RawForecast, GatewayError> {
        match self.kind {
            ProviderKind::OpenaiChat => self.generate_chat(prompt),
            ProviderKind::AnthropicMessages => self.generate_messages(prompt),
            ProviderKind::FireworksCompletions => unreachable!("rejected in new()"),
        }
    }
}

/// A frozen scorer behind an echo-logprob completions endpoint.
pub struct HttpScorer {
    id: String,
    provider_id: String,
    base_url: String,
    model: String,
    key: String,
    client: reqwest::blocking::Client,
}

impl HttpScorer {
    pub fn new(
        id: &str,
        provider_id: &str,
        provider: &ProviderEntry,
        model: &str,
    ) -> Result<Self, GatewayError> {
        if provider.kind != ProviderKind::FireworksCompletions {
            return Err(provider_err(
                provider_id,
                "scorers need a completions-style provider with echo logprobs",
            ));
        }
        Ok(Self {
            id: id.to_string(),
            provider_id: provider_id.to_string(),
            base_url: provider.base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            key: api_key(provider)?,
            client: client()?,
        })
    }

    /// Convert an echo-logprob payload into scored tokens. The first token
    /// has no conditioning context, so providers report `null`; it becomes
    /// 0.0 by decision (it never lands in a scored target in practice
    /// because prompts are non-empty).
    fn parse_echo(&self, v: &Value) -> Result<Vec<ScoredToken>, GatewayError> {
        let lp = &v["choices"][0]["logprobs"];
        let tokens = lp["tokens"]
            .as_array()
            .ok_or_else(|| provider_err(&self.provider_id, "missing logprobs.tokens"))?;
        let probs = lp["token_logprobs"]
            .as_array()
            .ok_or_else(|| provider_err(&self.provider_id, "missing token_logprobs"))?;
        if tokens.len() != probs.len() {
            return Err(provider_err(
                self.provider_id.as_str(),
                format!("{} tokens vs {} logprobs", tokens.len(), probs.len()),
            ));
        }
        tokens
            .iter()
            .zip(probs)
            .map(|(t, p)| {
                let text = t
                    .as_str()
                    .ok_or_else(|| provider_err(&self.provider_id, "non-string token"))?
                    .to_string();
                Ok(ScoredToken {
                    text,
                    logprob: p.as_f64().unwrap_or(0.0),
                })
            })
            .collect()
    }
}

impl Scorer for HttpScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score_text(&self, text: &str) -> Result<Vec<ScoredToken>, GatewayError> {
        let body = json!({
            "model": self.model,
            "prompt": text,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 1,
        });
        let url = format!("{}/completions", self.base_url);
        let auth = format!("Bearer {}", self.key);
        let v = post_json(
            &self.client,
            &self.provider_id,
            &url,
            &[("authorization", &auth)],
            &body,
        )?;
        self.parse_echo(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scorer() -> HttpScorer {
        HttpScorer {
            id: "s".into(),
            provider_id: "fw".into(),
            base_url: "http://unused".into(),
            model: "m".into(),
            key: "k".into(),
            client: reqwest::blocking::Client::new(),
        }
    }

    #[test]
    fn echo_payload_parses_with_null_first_logprob() {
        let v = json!({
            "choices": [{
                "logprobs": {
                    "tokens": ["Hel", "lo", "!"],
                    "token_logprobs": [null, -0.25, -1.5]
                }
            }]
        });
        let tokens = scorer().parse_echo(&v).unwrap();
        assert_eq!(tokens.len(), 3);
        assert_eq!(tokens[0].text, "Hel");
        assert_eq!(tokens[0].logprob, 0.0);
        assert_eq!(tokens[2].logprob, -1.5);
    }

    #[test]
    fn mismatched_echo_arrays_are_provider_errors() {
        let v = json!({
            "choices": [{
                "logprobs": {"tokens": ["a", "b"], "token_logprobs": [null]}
            }]
        });
        assert!(matches!(
            scorer().parse_echo(&v),
            Err(GatewayError::Provider { .. })
        ));
    }
}
