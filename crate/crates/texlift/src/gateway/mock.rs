//! Deterministic offline stand-ins for predictors and scorers.
//!
//! The mock predictors bracket the quality range: `oracle` emits the hidden
//! continuation verbatim, `noise` emits its characters in a seeded shuffle
//! (same length and alphabet, no structure), and `empty` emits nothing.
//!
//! The mock scorer is a character-level mixture model whose three parts are
//! chosen so the usual condition ordering emerges offline: a background
//! n-gram trained on a frozen corpus, a within-text copy model that rewards
//! continuations of strings already seen earlier in the prompt (so verbatim
//! hints help most), and a within-text unigram adaptation model that rewards
//! reuse of recently seen characters (so even a shuffled hint helps a
//! little). The adaptation model counts over a sliding recent window, wide
//! enough that an embedded hint is still in scope when the continuation is
//! scored, mirroring how recency dominates adaptation in real models.

use super::{
    GatewayError, Predictor, PredictorSetting, RawForecast, ReasoningEffort, ScoredToken, Scorer,
};
use crate::digest::{derive_seed, sha256_hex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::OnceLock;

fn mock_setting(model_id: &str) -> PredictorSetting {
    PredictorSetting {
        provider_id: "mock".into(),
        model_id: model_id.into(),
        reasoning_effort: ReasoningEffort::None,
        temperature: 1.0,
        max_forecast_chars: 100_000,
    }
}

/// Emits the hidden continuation verbatim: the ceiling of the quality range.
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn id(&self) -> &str {
        "mock-oracle"
    }
    fn setting(&self) -> PredictorSetting {
        mock_setting("oracle")
    }
    fn generate(
        &self,
        _prompt: &str,
        true_continuation: Option<&str>,
    ) -> Result<RawForecast, GatewayError> {
        let text = true_continuation.ok_or_else(|| GatewayError::Provider {
            provider: "mock".into(),
            message: "oracle predictor needs the hidden continuation".into(),
        })?;
        Ok(RawForecast {
            text: text.to_string(),
            hidden_reasoning_tokens: None,
            visible_tokens: None,
        })
    }
}

/// Emits the hidden continuation's characters in a seeded shuffle: right
/// length and alphabet, no sequential structure.
pub struct NoisePredictor {
    pub seed: u64,
}

impl Predictor for NoisePredictor {
    fn id(&self) -> &str {
        "mock-noise"
    }
    fn setting(&self) -> PredictorSetting {
        mock_setting("noise")
    }
    fn generate(
        &self,
        prompt: &str,
        true_continuation: Option<&str>,
    ) -> Result<RawForecast, GatewayError> {
        let text = true_continuation.ok_or_else(|| GatewayError::Provider {
            provider: "mock".into(),
            message: "noise predictor needs the hidden continuation".into(),
        })?;
        let mut chars: Vec<char> = text.chars().collect();
        let seed = derive_seed(self.seed, &["noise-forecast", &sha256_hex(&[prompt.as_bytes()])]);
        chars.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(RawForecast {
            text: chars.into_iter().collect(),
            hidden_reasoning_tokens: None,
            visible_tokens: None,
        })
    }
}

/// Emits nothing: the floor of the quality range.
pub struct EmptyPredictor;

impl Predictor for EmptyPredictor {
    fn id(&self) -> &str {
        "mock-empty"
    }
    fn setting(&self) -> PredictorSetting {
        mock_setting("empty")
    }
    fn generate(
        &self,
        _prompt: &str,
        _true_continuation: Option<&str>,
    ) -> Result<RawForecast, GatewayError> {
        Ok(RawForecast {
            text: String::new(),
            hidden_reasoning_tokens: None,
            visible_tokens: None,
        })
    }
}

/// Mixture weights for the mock scorer's three components.
#[derive(Debug, Clone, Copy)]
pub struct MixtureWeights {
    pub base: f64,
    pub copy: f64,
    pub adapt: f64,
}

/// Tuning knobs for [`NgramScorer`].
#[derive(Debug, Clone, Copy)]
pub struct NgramParams {
    /// Characters of context for the background model.
    pub context_chars: usize,
    /// Exact-match length for the within-text copy model.
    pub copy_context: usize,
    /// Sliding window (in characters) over which the adaptation model counts.
    pub adapt_window: usize,
    /// Characters per emitted token.
    pub token_width: usize,
    pub weights: MixtureWeights,
    /// Additive-smoothing pseudocounts, one per component.
    pub alpha_base: f64,
    pub alpha_copy: f64,
    pub alpha_adapt: f64,
}

impl Default for NgramParams {
    fn default() -> Self {
        Self {
            context_chars: 2,
            copy_context: 4,
            adapt_window: 4000,
            // Single-character tokens keep mock token boundaries aligned with
            // the prompt/target split, so offline runs never hit the
            // boundary-straddling path (that path is exercised in unit tests
            // with wider widths).
            token_width: 1,
            weights: MixtureWeights { base: 0.40, copy: 0.35, adapt: 0.25 },
            alpha_base: 0.20,
            alpha_copy: 0.02,
            alpha_adapt: 0.40,
        }
    }
}

/// Reserved vocabulary id for characters unseen at training time.
const UNK: usize = 0;

/// Frozen character-mixture scorer. Training is a single counting pass; the
/// id embeds a digest of parameters and training text so cached scores can
/// never be replayed against a different model.
pub struct NgramScorer {
    id: String,
    params: NgramParams,
    vocab_index: HashMap<char, usize>,
    vocab_size: usize,
    context_counts: HashMap<Vec<usize>, (HashMap<usize, u32>, u32)>,
    unigram_counts: HashMap<usize, u32>,
    unigram_total: u32,
}

impl NgramScorer {
    pub fn train(texts: &[&str], params: NgramParams) -> Self {
        assert!(params.token_width >= 1, "token width must be positive");
        assert!(params.adapt_window >= 1, "adaptation window must be positive");
        let w = params.weights;
        let weight_sum = w.base + w.copy + w.adapt;
        assert!(
            (weight_sum - 1.0).abs() < 1e-9 && w.base > 0.0 && w.copy > 0.0 && w.adapt > 0.0,
            "mixture weights must be positive and sum to one"
        );

        let mut vocab_index: HashMap<char, usize> = HashMap::new();
        let mut context_counts: HashMap<Vec<usize>, (HashMap<usize, u32>, u32)> = HashMap::new();
        let mut unigram_counts: HashMap<usize, u32> = HashMap::new();
        let mut unigram_total = 0u32;
        for text in texts {
            let ids: Vec<usize> = text
                .chars()
                .map(|c| {
                    let next = vocab_index.len() + 1;
                    *vocab_index.entry(c).or_insert(next)
                })
                .collect();
            for i in 0..ids.len() {
                *unigram_counts.entry(ids[i]).or_insert(0) += 1;
                unigram_total += 1;
                if i >= params.context_chars {
                    let ctx = ids[i - params.context_chars..i].to_vec();
                    let slot = context_counts.entry(ctx).or_default();
                    *slot.0.entry(ids[i]).or_insert(0) += 1;
                    slot.1 += 1;
                }
            }
        }
        let vocab_size = vocab_index.len() + 1; // plus the UNK slot
        assert!(vocab_size >= 2, "training corpus must not be empty");

        let mut digest_parts: Vec<Vec<u8>> = vec![format!(
            "k={} m={} win={} w={} mix={:.4}/{:.4}/{:.4} alpha={:.4}/{:.4}/{:.4}",
            params.context_chars,
            params.copy_context,
            params.adapt_window,
            params.token_width,
            w.base,
            w.copy,
            w.adapt,
            params.alpha_base,
            params.alpha_copy,
            params.alpha_adapt,
        )
        .into_bytes()];
        for text in texts {
            digest_parts.push(b"\0".to_vec());
            digest_parts.push(text.as_bytes().to_vec());
        }
        let part_refs: Vec<&[u8]> = digest_parts.iter().map(|p| p.as_slice()).collect();
        let id = format!("mock-ngram#{}", &sha256_hex(&part_refs)[..8]);

        Self {
            id,
            params,
            vocab_index,
            vocab_size,
            context_counts,
            unigram_counts,
            unigram_total,
        }
    }

    fn unigram_prob(&self, id: usize) -> f64 {
        let v = self.vocab_size as f64;
        let cnt = *self.unigram_counts.get(&id).unwrap_or(&0) as f64;
        (cnt + self.params.alpha_base) / (self.unigram_total as f64 + self.params.alpha_base * v)
    }

    /// Background probability: additive-smoothed fixed-context model with a
    /// unigram fallback when the context never occurred in training.
    fn base_prob(&self, ids: &[usize], i: usize) -> f64 {
        let k = self.params.context_chars;
        if i >= k {
            if let Some((next, total)) = self.context_counts.get(&ids[i - k..i]) {
                let v = self.vocab_size as f64;
                let cnt = *next.get(&ids[i]).unwrap_or(&0) as f64;
                return (cnt + self.params.alpha_base)
                    / (*total as f64 + self.params.alpha_base * v);
            }
        }
        self.unigram_prob(ids[i])
    }
}

impl Scorer for NgramScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score_text(&self, text: &str) -> Result<Vec<ScoredToken>, GatewayError> {
        let raw: Vec<char> = text.chars().collect();
        let ids: Vec<usize> = raw
            .iter()
            .map(|c| self.vocab_index.get(c).copied().unwrap_or(UNK))
            .collect();
        let p = &self.params;
        let v = self.vocab_size as f64;
        let uniform = 1.0 / v;

        // Within-text state, updated after each character is scored.
        let mut copy_counts: HashMap<String, (HashMap<char, u32>, u32)> = HashMap::new();
        let mut adapt_counts: HashMap<char, u32> = HashMap::new();

        let mut char_lps = Vec::with_capacity(raw.len());
        for i in 0..raw.len() {
            let p_base = self.base_prob(&ids, i);

            let copy_ctx: Option<String> =
                (i >= p.copy_context).then(|| raw[i - p.copy_context..i].iter().collect());
            let p_copy = match copy_ctx.as_ref().and_then(|ctx| copy_counts.get(ctx)) {
                Some((next, total)) => {
                    let cnt = *next.get(&raw[i]).unwrap_or(&0) as f64;
                    (cnt + p.alpha_copy) / (*total as f64 + p.alpha_copy * v)
                }
                None => uniform,
            };

            let cnt = *adapt_counts.get(&raw[i]).unwrap_or(&0) as f64;
            let in_window = i.min(p.adapt_window) as f64;
            let p_adapt = (cnt + p.alpha_adapt) / (in_window + p.alpha_adapt * v);

            let prob =
                p.weights.base * p_base + p.weights.copy * p_copy + p.weights.adapt * p_adapt;
            char_lps.push(prob.ln());

            *adapt_counts.entry(raw[i]).or_insert(0) += 1;
            if i >= p.adapt_window {
                let leaving = raw[i - p.adapt_window];
                if let Some(c) = adapt_counts.get_mut(&leaving) {
                    *c -= 1;
                    if *c == 0 {
                        adapt_counts.remove(&leaving);
                    }
                }
            }
            if let Some(ctx) = copy_ctx {
                let slot = copy_counts.entry(ctx).or_default();
                *slot.0.entry(raw[i]).or_insert(0) += 1;
                slot.1 += 1;
            }
        }

        Ok(raw
            .chunks(p.token_width)
            .zip(char_lps.chunks(p.token_width))
            .map(|(chars, lps)| ScoredToken {
                text: chars.iter().collect(),
                logprob: lps.iter().sum(),
            })
            .collect())
    }
}

/// Training corpus for the built-in mock scorers: the bundled sample papers.
/// Frozen at compile time so scorer ids (and thus cache keys) are stable.
const TRAINING_TEXTS: &[&str] = &[
    include_str!("../../testdata/corpus/alpha.tex"),
    include_str!("../../testdata/corpus/beta.tex"),
    include_str!("../../testdata/corpus/gamma.tex"),
    include_str!("../../testdata/corpus/delta.tex"),
    include_str!("../../testdata/corpus/epsilon.tex"),
    include_str!("../../testdata/corpus/zeta-main.tex"),
    include_str!("../../testdata/corpus/zeta-body.tex"),
];

/// Shared scorer for offline pipeline and probe runs.
pub fn builtin_scorer() -> &'static NgramScorer {
    static SCORER: OnceLock<NgramScorer> = OnceLock::new();
    SCORER.get_or_init(|| NgramScorer::train(TRAINING_TEXTS, NgramParams::default()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_scorer(width: usize) -> NgramScorer {
        NgramScorer::train(
            &["the quick brown fox jumps over the lazy dog. \\begin{align} x = y + z \\end{align}"],
            NgramParams { token_width: width, ..NgramParams::default() },
        )
    }

    #[test]
    fn oracle_echoes_and_empty_is_empty() {
        let f = OraclePredictor.generate("prompt", Some("E = mc^2")).unwrap();
        assert_eq!(f.text, "E = mc^2");
        assert!(OraclePredictor.generate("prompt", None).is_err());
        assert_eq!(EmptyPredictor.generate("prompt", Some("E = mc^2")).unwrap().text, "");
    }

    #[test]
    fn noise_permutes_deterministically_per_prompt() {
        let noise = NoisePredictor { seed: 7 };
        let a = noise.generate("prompt one", Some("abcdefgh")).unwrap().text;
        let b = noise.generate("prompt one", Some("abcdefgh")).unwrap().text;
        let c = noise.generate("prompt two", Some("abcdefgh")).unwrap().text;
        assert_eq!(a, b);
        assert_ne!(a, c, "different prompts draw different shuffles");
        let mut sorted: Vec<char> = a.chars().collect();
        sorted.sort_unstable();
        assert_eq!(sorted, "abcdefgh".chars().collect::<Vec<_>>());
    }

    #[test]
    fn tokens_tile_the_text_at_the_requested_width() {
        let scorer = small_scorer(2);
        let tokens = scorer.score_text("hello!").unwrap();
        let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, vec!["he", "ll", "o!"]);
        // Odd length leaves a short final token.
        let tokens = scorer.score_text("hello").unwrap();
        assert_eq!(tokens.last().unwrap().text, "o");
        assert!(scorer.score_text("").unwrap().is_empty());
    }

    #[test]
    fn scoring_is_deterministic() {
        let scorer = small_scorer(2);
        let a = scorer.score_text("the quick brown fox").unwrap();
        let b = scorer.score_text("the quick brown fox").unwrap();
        assert_eq!(a, b);
    }

    /// The copy component should make a verbatim earlier occurrence of the
    /// target worth more than an unrelated prompt of the same length.
    #[test]
    fn verbatim_repetition_raises_target_likelihood() {
        let scorer = small_scorer(1);
        let target = "x = y + z w";
        let with_copy = format!("{target} ... {target}");
        let without = format!("aqj klmn pqr ... {target}");
        let tail_sum = |text: &str| -> f64 {
            let tokens = scorer.score_text(text).unwrap();
            let n = target.chars().count();
            tokens[tokens.len() - n..].iter().map(|t| t.logprob).sum()
        };
        assert!(
            tail_sum(&with_copy) > tail_sum(&without) + 1.0,
            "copy: {} vs {}",
            tail_sum(&with_copy),
            tail_sum(&without)
        );
    }

    /// The adaptation component should make a shuffled version of the target
    /// (same characters, no order) worth more than unrelated characters.
    #[test]
    fn shared_alphabet_raises_target_likelihood() {
        let scorer = small_scorer(1);
        let target = "zqzqvjvjxwxw";
        let shuffled = "qzjvwxqzjvwx";
        let unrelated = "aeiou aeiou ";
        let tail_sum = |prefix: &str| -> f64 {
            let tokens = scorer.score_text(&format!("{prefix}|{target}")).unwrap();
            let n = target.chars().count();
            tokens[tokens.len() - n..].iter().map(|t| t.logprob).sum()
        };
        assert!(
            tail_sum(shuffled) > tail_sum(unrelated),
            "adaptation: {} vs {}",
            tail_sum(shuffled),
            tail_sum(unrelated)
        );
    }

    /// Characters that scrolled out of the adaptation window stop helping:
    /// the same rare-alphabet hint is worth more right before the target than
    /// pushed far behind it by filler.
    #[test]
    fn adaptation_forgets_characters_outside_its_window() {
        let scorer = NgramScorer::train(
            &["the quick brown fox jumps over the lazy dog"],
            NgramParams { token_width: 1, adapt_window: 32, ..NgramParams::default() },
        );
        let target = "zqvjzqvjzqvj";
        let filler = "the dog. ".repeat(10);
        let tail_sum = |text: &str| -> f64 {
            let tokens = scorer.score_text(text).unwrap();
            let n = target.chars().count();
            tokens[tokens.len() - n..].iter().map(|t| t.logprob).sum()
        };
        let near = tail_sum(&format!("{filler}{target}|{target}"));
        let far = tail_sum(&format!("{target}{filler}|{target}"));
        assert!(near > far, "recency: {near} vs {far}");
    }

    proptest! {
        /// Log-probabilities are finite and strictly negative for any text,
        /// including characters never seen in training.
        #[test]
        fn logprobs_are_finite_and_negative(text in ".{1,80}") {
            let scorer = small_scorer(2);
            for token in scorer.score_text(&text).unwrap() {
                prop_assert!(token.logprob.is_finite());
                prop_assert!(token.logprob < 0.0);
            }
        }
    }
}
