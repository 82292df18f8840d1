//! Declarative run configuration (TOML).
//!
//! Every knob that can change an artifact lives here, so a digest of the
//! config (plus the seed) identifies a run. All sections default, so an
//! empty file is a valid offline configuration.

use crate::cut::{CutConfig, ProseConfig};
use crate::digest::sha256_hex;
use crate::gateway::ReasoningEffort;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Which cut family a run extracts and scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Equation,
    Prose,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Equation => "equation",
            Mode::Prose => "prose",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equation" => Ok(Mode::Equation),
            "prose" => Ok(Mode::Prose),
            other => Err(format!("unknown mode `{other}` (use equation|prose)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub seed: u64,
    pub mode: Mode,
    /// Worker threads for forecast/score stages.
    pub max_in_flight: usize,
    /// Hard cap on non-cached provider calls; `None` means unmetered.
    pub max_spend: Option<u64>,
    /// Refuse network adapters and use mocks only.
    pub offline: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: Mode::Equation,
            max_in_flight: 4,
            max_spend: None,
            offline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct CorpusSection {
    /// Optional subject tags per paper id, carried into the corpus file.
    pub tags: BTreeMap<String, Vec<String>>,
    /// Papers whose flattened source is shorter are skipped at ingest.
    pub min_chars: usize,
    /// When non-empty, keep only papers whose source contains at least one
    /// of these strings. No default list ships; studies choose their own.
    pub keep_keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ScaffoldSection {
    /// Prose predictor prompt override; `{chars}` and `{context}` expand.
    pub prose_predictor_template: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewaySection {
    pub retry_max_attempts: u32,
    pub retry_base_delay_ms: u64,
}

impl Default for GatewaySection {
    fn default() -> Self {
        Self {
            retry_max_attempts: 5,
            retry_base_delay_ms: 250,
        }
    }
}

/// Wire protocol spoken by a provider endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    /// Chat-completions style (predictors).
    OpenaiChat,
    /// Messages API style (predictors).
    AnthropicMessages,
    /// Echo-logprob completions style (scorers).
    FireworksCompletions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderEntry {
    pub kind: ProviderKind,
    pub base_url: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorEntry {
    pub provider: String,
    pub model: String,
    #[serde(default = "default_effort")]
    pub reasoning_effort: ReasoningEffort,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_forecast_chars")]
    pub max_forecast_chars: usize,
}

fn default_effort() -> ReasoningEffort {
    ReasoningEffort::None
}
fn default_temperature() -> f64 {
    1.0
}
fn default_max_forecast_chars() -> usize {
    4000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerEntry {
    pub provider: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Config {
    pub run: RunSection,
    pub corpus: CorpusSection,
    pub cut: CutConfig,
    pub prose: ProseConfig,
    pub scaffold: ScaffoldSection,
    pub gateway: GatewaySection,
    pub providers: BTreeMap<String, ProviderEntry>,
    pub predictors: BTreeMap<String, PredictorEntry>,
    pub scorers: BTreeMap<String, ScorerEntry>,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| anyhow::anyhow!("parsing config {}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Digest of the canonical JSON form: changes iff any field changes.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        sha256_hex(&[canonical.as_bytes()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.run.seed, 0);
        assert_eq!(cfg.run.mode, Mode::Equation);
        assert_eq!(cfg.cut.max_cuts_per_paper, 10);
        assert_eq!(cfg.prose.target_chars, 2_000);
    }

    #[test]
    fn digest_changes_iff_a_field_changes() {
        let base = Config::parse("").unwrap();
        let same = Config::parse("[run]\nseed = 0\n").unwrap();
        assert_eq!(base.digest(), same.digest());
        let seeded = Config::parse("[run]\nseed = 7\n").unwrap();
        assert_ne!(base.digest(), seeded.digest());
        let cut = Config::parse("[cut]\nmax_cuts_per_paper = 3\n").unwrap();
        assert_ne!(base.digest(), cut.digest());
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
[run]
seed = 11
mode = "prose"
max_in_flight = 2
max_spend = 100
offline = true

[corpus.tags]
alpha = ["math.PR", "math.ST"]

[cut]
max_cuts_per_paper = 5

[providers.fw]
kind = "fireworks-completions"
base_url = "https://example.test/v1"
api_key_env = "FW_KEY"

[predictors.strong]
provider = "oa"
model = "some-model"
reasoning_effort = "high"
temperature = 0.7

[providers.oa]
kind = "openai-chat"
base_url = "https://example.test/v2"
api_key_env = "OA_KEY"

[scorers.qwen]
provider = "fw"
model = "qwen3-8b"
"#;
        let cfg = Config::parse(text).unwrap();
        assert_eq!(cfg.run.mode, Mode::Prose);
        assert_eq!(cfg.run.max_spend, Some(100));
        assert_eq!(cfg.corpus.tags["alpha"], vec!["math.PR", "math.ST"]);
        assert_eq!(cfg.cut.max_cuts_per_paper, 5);
        assert_eq!(cfg.providers["fw"].kind, ProviderKind::FireworksCompletions);
        let p = &cfg.predictors["strong"];
        assert_eq!(p.reasoning_effort, ReasoningEffort::High);
        assert_eq!(p.temperature, 0.7);
        assert_eq!(p.max_forecast_chars, 4000);
        assert_eq!(cfg.scorers["qwen"].model, "qwen3-8b");
    }

    #[test]
    fn unknown_mode_is_an_error() {
        assert!(Config::parse("[run]\nmode = \"both\"\n").is_err());
        assert!("equation".parse::<Mode>().is_ok());
        assert!("both".parse::<Mode>().is_err());
    }
}
