//! Model gateway: predictor and scorer drivers with caching and mocks.
//!
//! All model traffic flows through [`Gateway`], which adds three behaviors
//! uniformly: a content-addressed call cache (replaying a finished run makes
//! zero provider calls and reproduces records bit-exactly), a spend meter
//! enforced before each non-cached call, and bounded retries. Offline runs
//! swap the network adapters for the deterministic mocks in [`mock`].

pub mod cache;
pub mod http;
pub mod mock;

use crate::digest::sha256_hex;
use crate::metrics::TokenLogLikelihoods;
use crate::scaffold::{truncate_forecast, ScoredPrompt};
use crate::textutil::char_len;
use cache::CallCache;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("provider {provider}: {message}")]
    Provider { provider: String, message: String },
    #[error("spend cap of {cap} calls reached")]
    BudgetExceeded { cap: u64 },
    #[error("token alignment failed: {0}")]
    Alignment(String),
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
    #[error("call cache: {0}")]
    Cache(String),
}

/// Provider-defined hidden-reasoning budget for a predictor call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningEffort {
    None,
    Low,
    Medium,
    High,
}

impl fmt::Display for ReasoningEffort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ReasoningEffort::None => "none",
            ReasoningEffort::Low => "low",
            ReasoningEffort::Medium => "medium",
            ReasoningEffort::High => "high",
        };
        f.write_str(s)
    }
}

impl FromStr for ReasoningEffort {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ReasoningEffort::None),
            "low" => Ok(ReasoningEffort::Low),
            "medium" => Ok(ReasoningEffort::Medium),
            "high" => Ok(ReasoningEffort::High),
            other => Err(format!("unknown reasoning effort `{other}`")),
        }
    }
}

/// Everything that identifies how a forecast was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSetting {
    pub provider_id: String,
    pub model_id: String,
    pub reasoning_effort: ReasoningEffort,
    pub temperature: f64,
    pub max_forecast_chars: usize,
}

/// A predictor's raw response before budget truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawForecast {
    pub text: String,
    pub hidden_reasoning_tokens: Option<u64>,
    pub visible_tokens: Option<u64>,
}

/// A stored forecast for one cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub cut_id: String,
    pub predictor_id: String,
    pub setting: PredictorSetting,
    pub z_raw: String,
    /// `z_raw` truncated to the cut's character budget.
    pub z_truncated: String,
    pub hidden_reasoning_tokens: Option<u64>,
    pub visible_tokens: Option<u64>,
    pub latency_ms: u64,
}

/// A model that writes forecast strings.
///
/// `true_continuation` is the hidden target and exists solely for the
/// offline mocks (oracle and noise); network adapters must ignore it.
pub trait Predictor: Sync {
    fn id(&self) -> &str;
    fn setting(&self) -> PredictorSetting;
    fn generate(
        &self,
        prompt: &str,
        true_continuation: Option<&str>,
    ) -> Result<RawForecast, GatewayError>;
}

/// One token of a scored text, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredToken {
    pub text: String,
    pub logprob: f64,
}

/// A frozen model that assigns per-token log-likelihoods to a text.
///
/// The returned tokens must tile the input exactly, in order; the gateway
/// verifies this and reconstructs character spans from cumulative lengths.
pub trait Scorer: Sync {
    fn id(&self) -> &str;
    fn score_text(&self, text: &str) -> Result<Vec<ScoredToken>, GatewayError>;
}

/// Per-token log-likelihoods for one (cut, condition, scorer) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub cut_id: String,
    pub condition: String,
    pub scorer_id: String,
    /// `(span_start, span_end, logprob)`, char offsets into prompt+target.
    pub tokens: Vec<(usize, usize, f64)>,
    /// Indices into `tokens` of the tokens attributed to the target.
    pub target_token_indices: Vec<usize>,
    /// True when the first target token starts inside the prompt.
    pub straddle_flag: bool,
}

impl ScoreRecord {
    /// The λ vector scored by the metrics module.
    pub fn target_lambdas(&self) -> TokenLogLikelihoods {
        TokenLogLikelihoods(
            self.target_token_indices
                .iter()
                .map(|&i| self.tokens[i].2)
                .collect(),
        )
    }
}

/// Split a tokenization at the prompt/target boundary.
///
/// Target tokens are all whose span ends after the boundary. If the first of
/// them starts before the boundary it straddles: it is attributed wholly to
/// the target and flagged, so analysis can exclude affected cuts.
pub fn align_target_tokens(
    spans: &[(usize, usize)],
    prompt_char_len: usize,
) -> (Vec<usize>, bool) {
    let indices: Vec<usize> = spans
        .iter()
        .enumerate()
        .filter(|(_, s)| s.1 > prompt_char_len)
        .map(|(i, _)| i)
        .collect();
    let straddle = indices
        .first()
        .is_some_and(|&i| spans[i].0 < prompt_char_len);
    (indices, straddle)
}

/// Retry schedule for provider calls: exponential backoff, bounded attempts.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay_ms: 250,
        }
    }
}

impl RetryPolicy {
    /// Run `op` until it succeeds or attempts run out; only provider errors
    /// are retried, everything else aborts immediately.
    fn run<R>(
        &self,
        mut op: impl FnMut() -> Result<R, GatewayError>,
    ) -> Result<R, GatewayError> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(r) => return Ok(r),
                Err(e @ GatewayError::Provider { .. }) => {
                    attempt += 1;
                    if attempt >= self.max_attempts {
                        return Err(e);
                    }
                    let delay = self.base_delay_ms.saturating_mul(1 << (attempt - 1).min(16));
                    log::warn!("provider call failed (attempt {attempt}): {e}; retrying");
                    std::thread::sleep(std::time::Duration::from_millis(delay));
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Monotone call counter with an optional hard cap, checked before each
/// non-cached provider call.
#[derive(Debug)]
pub struct SpendMeter {
    cap: Option<u64>,
    used: AtomicU64,
    cache_hits: AtomicU64,
}

impl SpendMeter {
    pub fn new(cap: Option<u64>) -> Self {
        Self {
            cap,
            used: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    fn charge(&self) -> Result<(), GatewayError> {
        let prev = self.used.fetch_add(1, Ordering::SeqCst);
        match self.cap {
            Some(cap) if prev >= cap => {
                // Leave the counter past the cap: the call never happened but
                // further calls must keep failing fast.
                Err(GatewayError::BudgetExceeded { cap })
            }
            _ => Ok(()),
        }
    }

    fn note_cache_hit(&self) {
        self.cache_hits.fetch_add(1, Ordering::Relaxed);
    }

    pub fn calls_made(&self) -> u64 {
        self.used.load(Ordering::SeqCst).min(self.cap.unwrap_or(u64::MAX))
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }
}

/// The shared driver handed to forecast and score stages.
pub struct Gateway<'a> {
    pub cache: &'a CallCache,
    pub spend: &'a SpendMeter,
    pub retry: RetryPolicy,
}

#[derive(Serialize, Deserialize)]
struct ForecastPayload {
    z_raw: String,
    hidden_reasoning_tokens: Option<u64>,
    visible_tokens: Option<u64>,
    latency_ms: u64,
}

#[derive(Serialize, Deserialize)]
struct ScorePayload {
    tokens: Vec<(String, f64)>,
}

impl Gateway<'_> {
    /// Obtain a forecast for one cut, from cache when possible.
    ///
    /// `budget` is the cut's character budget used for `z_truncated`;
    /// `true_continuation` is forwarded to mocks only.
    pub fn generate_forecast(
        &self,
        predictor: &dyn Predictor,
        cut_id: &str,
        prompt: &str,
        true_continuation: Option<&str>,
        budget: usize,
    ) -> Result<Forecast, GatewayError> {
        let setting = predictor.setting();
        let setting_json =
            serde_json::to_string(&setting).map_err(|e| GatewayError::Cache(e.to_string()))?;
        let key = sha256_hex(&[
            b"forecast\0",
            predictor.id().as_bytes(),
            b"\0",
            prompt.as_bytes(),
            b"\0",
            setting_json.as_bytes(),
        ]);
        let payload: ForecastPayload = match self.cache.get(&key) {
            Some(value) => {
                self.spend.note_cache_hit();
                serde_json::from_value(value).map_err(|e| GatewayError::Cache(e.to_string()))?
            }
            None => {
                self.spend.charge()?;
                let started = std::time::Instant::now();
                let raw = self
                    .retry
                    .run(|| predictor.generate(prompt, true_continuation))?;
                let payload = ForecastPayload {
                    z_raw: raw.text,
                    hidden_reasoning_tokens: raw.hidden_reasoning_tokens,
                    visible_tokens: raw.visible_tokens,
                    latency_ms: started.elapsed().as_millis() as u64,
                };
                let value = serde_json::to_value(&payload)
                    .map_err(|e| GatewayError::Cache(e.to_string()))?;
                self.cache
                    .put(&key, "forecast", &sha256_hex(&[prompt.as_bytes()]), value)?;
                payload
            }
        };
        Ok(Forecast {
            cut_id: cut_id.to_string(),
            predictor_id: predictor.id().to_string(),
            setting,
            z_truncated: truncate_forecast(&payload.z_raw, budget).to_string(),
            z_raw: payload.z_raw,
            hidden_reasoning_tokens: payload.hidden_reasoning_tokens,
            visible_tokens: payload.visible_tokens,
            latency_ms: payload.latency_ms,
        })
    }

    /// Score a prompt/target pair token-by-token, from cache when possible.
    pub fn score_target(
        &self,
        scorer: &dyn Scorer,
        sp: &ScoredPrompt,
    ) -> Result<ScoreRecord, GatewayError> {
        let full_text = format!("{}{}", sp.prompt_text, sp.target_text);
        let key = sha256_hex(&[
            b"score\0",
            sp.prompt_text.as_bytes(),
            b"\0",
            sp.target_text.as_bytes(),
            b"\0",
            scorer.id().as_bytes(),
        ]);
        let payload: ScorePayload = match self.cache.get(&key) {
            Some(value) => {
                self.spend.note_cache_hit();
                serde_json::from_value(value).map_err(|e| GatewayError::Cache(e.to_string()))?
            }
            None => {
                self.spend.charge()?;
                let tokens = self.retry.run(|| scorer.score_text(&full_text))?;
                let payload = ScorePayload {
                    tokens: tokens.into_iter().map(|t| (t.text, t.logprob)).collect(),
                };
                let value = serde_json::to_value(&payload)
                    .map_err(|e| GatewayError::Cache(e.to_string()))?;
                self.cache
                    .put(&key, "score", &sha256_hex(&[full_text.as_bytes()]), value)?;
                payload
            }
        };

        // Rebuild character spans from cumulative token lengths and verify
        // the tokens tile the scored text exactly.
        let mut spans = Vec::with_capacity(payload.tokens.len());
        let mut reassembled = String::with_capacity(full_text.len());
        let mut offset = 0usize;
        for (text, logprob) in &payload.tokens {
            let len = char_len(text);
            spans.push((offset, offset + len, *logprob));
            reassembled.push_str(text);
            offset += len;
        }
        if reassembled != full_text {
            return Err(GatewayError::Alignment(format!(
                "scorer {} returned tokens covering {} chars that do not tile the {}-char text",
                scorer.id(),
                offset,
                char_len(&full_text),
            )));
        }
        let plain_spans: Vec<(usize, usize)> = spans.iter().map(|&(s, e, _)| (s, e)).collect();
        let (target_token_indices, straddle_flag) =
            align_target_tokens(&plain_spans, sp.prompt_char_len);
        Ok(ScoreRecord {
            cut_id: sp.cut_id.clone(),
            condition: sp.condition.clone(),
            scorer_id: scorer.id().to_string(),
            tokens: spans,
            target_token_indices,
            straddle_flag,
        })
    }
}

/// Run `f` over `items` with at most `max_in_flight` worker threads.
///
/// Results come back in input order regardless of completion order, so
/// downstream aggregates are invariant to scheduling.
pub fn bounded_parallel<T: Sync, R: Send>(
    items: &[T],
    max_in_flight: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    assert!(max_in_flight >= 1, "need at least one worker");
    let next = AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<R>>> =
        (0..items.len()).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..max_in_flight.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("worker filled slot"))
        .collect()
}
