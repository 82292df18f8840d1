//! Prompt construction: predictor prompts, scorer scaffolds, and controls.
//!
//! Everything here is deliberately dumb string concatenation — downstream
//! caching and reproducibility depend on these functions being bit-exact.
//! The one structural idea is the scorer scaffold: the scorer first reads the
//! equation prefix completed by the auxiliary string `Z` as a finished
//! display, then the same prefix again, and is scored on the true suffix.
//! Copying the completed first display is the intended induced behavior, so
//! a `Z` that actually predicts the suffix directly raises the target's
//! likelihood. Controls swap `Z` (or the whole scaffold) for budget-matched
//! source context so that "nearby context stuffing" has a measured baseline.

use crate::cut::{EquationCut, ProseCut};
use crate::textutil::{char_len, char_prefix, char_suffix, round_to_nearest_ten};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScaffoldError {
    /// A forecast-bearing condition was built without its auxiliary string.
    #[error("condition `{0}` requires z_text")]
    MissingZ(String),
    /// A context control asked for more source than exists before the cut.
    #[error("condition `{label}` needs {needed} pre-equation characters, only {available} available")]
    InsufficientSource {
        label: String,
        needed: usize,
        available: usize,
    },
    /// An equation condition was used with the prose builder or vice versa.
    #[error("condition `{0}` does not apply to this cut family")]
    WrongFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionKind {
    EmptyScaffold,
    SameBudgetContext,
    TripleBudgetContext,
    ForecastScaffold,
    TrueSuffixScaffold,
    ProseForecastScaffold,
    ProseContextControl,
}

/// One scoring condition: what stands in for the auxiliary string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringCondition {
    pub kind: ConditionKind,
    /// Stable label used in score records and aggregate rows.
    pub label: String,
    /// Forecast text for forecast-bearing kinds.
    pub z_text: Option<String>,
    /// Requested pre-equation characters for context controls.
    pub budget: Option<usize>,
}

impl ScoringCondition {
    pub fn empty() -> Self {
        Self {
            kind: ConditionKind::EmptyScaffold,
            label: "empty".into(),
            z_text: None,
            budget: None,
        }
    }

    /// Same-budget context control: `budget_b` raw source characters.
    pub fn same_budget(budget_b: usize) -> Self {
        Self {
            kind: ConditionKind::SameBudgetContext,
            label: "same_budget".into(),
            z_text: None,
            budget: Some(budget_b),
        }
    }

    /// Triple-budget context control: three times `budget_b`.
    pub fn triple_budget(budget_b: usize) -> Self {
        Self {
            kind: ConditionKind::TripleBudgetContext,
            label: "triple_budget".into(),
            z_text: None,
            budget: Some(3 * budget_b),
        }
    }

    /// A predictor's forecast, labeled by the predictor id.
    pub fn forecast(predictor_id: &str, z: String) -> Self {
        Self {
            kind: ConditionKind::ForecastScaffold,
            label: format!("forecast:{predictor_id}"),
            z_text: Some(z),
            budget: None,
        }
    }

    /// Oracle condition: the auxiliary string is the true suffix itself.
    pub fn true_suffix(suffix_y: String) -> Self {
        Self {
            kind: ConditionKind::TrueSuffixScaffold,
            label: "true_suffix".into(),
            z_text: Some(suffix_y),
            budget: None,
        }
    }

    pub fn prose_forecast(predictor_id: &str, z: String) -> Self {
        Self {
            kind: ConditionKind::ProseForecastScaffold,
            label: format!("prose_forecast:{predictor_id}"),
            z_text: Some(z),
            budget: None,
        }
    }

    pub fn prose_context() -> Self {
        Self {
            kind: ConditionKind::ProseContextControl,
            label: "prose_context".into(),
            z_text: None,
            budget: None,
        }
    }

    fn z_or_err(&self) -> Result<&str, ScaffoldError> {
        self.z_text
            .as_deref()
            .ok_or_else(|| ScaffoldError::MissingZ(self.label.clone()))
    }
}

/// A prompt/target pair ready for token-level scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrompt {
    pub cut_id: String,
    pub condition: String,
    pub prompt_text: String,
    pub target_text: String,
    pub prompt_char_len: usize,
}

impl ScoredPrompt {
    fn new(cut_id: &str, condition: &str, prompt_text: String, target_text: String) -> Self {
        Self {
            cut_id: cut_id.to_string(),
            condition: condition.to_string(),
            prompt_char_len: char_len(&prompt_text),
            prompt_text,
            target_text,
        }
    }
}

/// First `budget` characters of a forecast (whole characters, head-retaining).
pub fn truncate_forecast(z: &str, budget: usize) -> &str {
    char_prefix(z, budget)
}

/// The equation predictor prompt.
///
/// The requested length is the true suffix length rounded to the nearest
/// ten, phrased as an upper bound so the predictor is not pushed to pad.
pub fn build_predictor_prompt_equation(cut: &EquationCut) -> String {
    let n = round_to_nearest_ten(char_len(&cut.suffix_y));
    format!(
        "You are given recent context from a technical paper and the beginning of a\n\
         LaTeX display equation.\n\
         Continue the equation from exactly where it stops, in about {n} characters or fewer.\n\
         Write only the continuation. Do not write explanatory prose. Do not write {close}.\n\
         \n\
         Recent paper context:\n\
         {context}\n\
         \n\
         Equation prefix:\n\
         {open}{prefix}",
        close = cut.closing_delimiter,
        context = cut.context_chars,
        open = cut.opening_delimiter(),
        prefix = cut.prefix,
    )
}

/// The prose predictor prompt. The wording is configurable; `template` uses
/// `{chars}` and `{context}` placeholders.
pub fn build_predictor_prompt_prose(cut: &ProseCut, template: &str, request_chars: usize) -> String {
    template
        .replace("{chars}", &request_chars.to_string())
        .replace("{context}", &cut.context_pred)
}

pub const DEFAULT_PROSE_PREDICTOR_TEMPLATE: &str = "You are given recent context from a technical paper.\n\
Continue the paper from exactly where the context stops, in about {chars} characters or fewer.\n\
Write only the continuation. Do not write commentary about the task.\n\
\n\
Recent paper context:\n\
{context}";

/// Build the scorer prompt for an equation cut under one condition.
///
/// The target is always `suffix_y + closing_delimiter`, identical across
/// conditions; only the prompt varies. Forecast-bearing conditions embed
/// `Z` truncated to `budget_b`; context controls replace the whole scaffold
/// with raw source ending at the opening delimiter.
pub fn build_scorer_prompt_equation(
    cut: &EquationCut,
    cond: &ScoringCondition,
) -> Result<ScoredPrompt, ScaffoldError> {
    let open = cut.opening_delimiter();
    let target = format!("{}{}", cut.suffix_y, cut.closing_delimiter);
    let prompt = match cond.kind {
        ConditionKind::ForecastScaffold | ConditionKind::TrueSuffixScaffold => {
            let z = truncate_forecast(cond.z_or_err()?, cut.budget_b);
            format!(
                "{open}{prefix}{z}{close}\n\n{open}{prefix}",
                prefix = cut.prefix,
                close = cut.closing_delimiter,
            )
        }
        ConditionKind::EmptyScaffold => format!("{open}{}", cut.prefix),
        ConditionKind::SameBudgetContext | ConditionKind::TripleBudgetContext => {
            let needed = cond.budget.unwrap_or(cut.budget_b);
            let available = char_len(&cut.context_chars);
            if needed > available {
                return Err(ScaffoldError::InsufficientSource {
                    label: cond.label.clone(),
                    needed,
                    available,
                });
            }
            format!(
                "{}{open}{}",
                char_suffix(&cut.context_chars, needed),
                cut.prefix
            )
        }
        ConditionKind::ProseForecastScaffold | ConditionKind::ProseContextControl => {
            return Err(ScaffoldError::WrongFamily(cond.label.clone()))
        }
    };
    Ok(ScoredPrompt::new(&cut.cut_id, &cond.label, prompt, target))
}

/// Build the scorer prompt for a prose cut under one condition.
///
/// The forecast scaffold shows the last 2,000 pre-target characters, the
/// embedded forecast (truncated to `z_budget`), then the same 2,000
/// characters again; the context control reads 3,000 contiguous pre-target
/// characters instead. The target is always the hidden continuation.
pub fn build_scorer_prompt_prose(
    cut: &ProseCut,
    cond: &ScoringCondition,
    z_budget: usize,
) -> Result<ScoredPrompt, ScaffoldError> {
    let prompt = match cond.kind {
        ConditionKind::ProseForecastScaffold => {
            let z = truncate_forecast(cond.z_or_err()?, z_budget);
            format!("{pre}\n\n{z}\n\n{pre}", pre = cut.pre2000)
        }
        ConditionKind::ProseContextControl => cut.pre3000.clone(),
        _ => return Err(ScaffoldError::WrongFamily(cond.label.clone())),
    };
    Ok(ScoredPrompt::new(
        &cut.cut_id,
        &cond.label,
        prompt,
        cut.target_y.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cut_with_suffix(suffix: &str) -> EquationCut {
        let prefix = "E = mc^2 + ".to_string();
        let body = format!("{prefix}{suffix}");
        let context: String = "c".repeat(10_000);
        EquationCut {
            cut_id: "p:e10000".into(),
            paper_id: "p".into(),
            env_name: "equation".into(),
            eq_start: 10_000,
            body_start: 10_016,
            body_end: 10_016 + body.chars().count(),
            cut_offset: 10_016 + prefix.chars().count(),
            prefix,
            suffix_y: suffix.to_string(),
            closing_delimiter: "\\end{equation}".into(),
            context_chars: context,
            budget_b: suffix.chars().count() + 40,
            equation_key: "p:10000".into(),
        }
    }

    #[test]
    fn predictor_prompt_rounds_budget_and_names_delimiter() {
        let cut = cut_with_suffix(&"s".repeat(127));
        let prompt = build_predictor_prompt_equation(&cut);
        assert!(prompt.contains("in about 130 characters or fewer"));
        assert!(prompt.contains("Do not write \\end{equation}."));
        assert!(prompt.ends_with("Equation prefix:\n\\begin{equation}E = mc^2 + "));
        assert_eq!(prompt, build_predictor_prompt_equation(&cut));

        let cut50 = cut_with_suffix(&"s".repeat(50));
        assert!(build_predictor_prompt_equation(&cut50).contains("about 50 characters"));
    }

    #[test]
    fn true_suffix_scaffold_reconstitutes_the_equation() {
        let cut = cut_with_suffix(&"a + b + c".repeat(8));
        let cond = ScoringCondition::true_suffix(cut.suffix_y.clone());
        let sp = build_scorer_prompt_equation(&cut, &cond).unwrap();
        let original = format!(
            "{}{}{}{}",
            cut.opening_delimiter(),
            cut.prefix,
            cut.suffix_y,
            cut.closing_delimiter
        );
        assert!(sp.prompt_text.contains(&original));
        assert!(sp.prompt_text.ends_with(&format!(
            "\n\n{}{}",
            cut.opening_delimiter(),
            cut.prefix
        )));
    }

    #[test]
    fn all_equation_conditions_share_one_target() {
        let cut = cut_with_suffix(&"x_i \\le y_i".repeat(6));
        let conds = [
            ScoringCondition::empty(),
            ScoringCondition::same_budget(cut.budget_b),
            ScoringCondition::triple_budget(cut.budget_b),
            ScoringCondition::forecast("m", "guess".into()),
            ScoringCondition::true_suffix(cut.suffix_y.clone()),
        ];
        let targets: Vec<String> = conds
            .iter()
            .map(|c| build_scorer_prompt_equation(&cut, c).unwrap().target_text)
            .collect();
        assert!(targets.iter().all(|t| t == &targets[0]));
        assert_eq!(
            targets[0],
            format!("{}{}", cut.suffix_y, cut.closing_delimiter)
        );
    }

    #[test]
    fn same_budget_prompt_has_exactly_budget_pre_equation_chars() {
        let cut = cut_with_suffix(&"y".repeat(100));
        let sp = build_scorer_prompt_equation(&cut, &ScoringCondition::same_budget(cut.budget_b))
            .unwrap();
        // B = 100 + 40 = 140 characters, then the delimiter + prefix.
        let tail = format!("{}{}", cut.opening_delimiter(), cut.prefix);
        let pre = sp.prompt_text.strip_suffix(&tail).unwrap();
        assert_eq!(pre.chars().count(), 140);
        assert_eq!(pre, &"c".repeat(140));

        let triple =
            build_scorer_prompt_equation(&cut, &ScoringCondition::triple_budget(cut.budget_b))
                .unwrap();
        let pre3 = triple.prompt_text.strip_suffix(&tail).unwrap();
        assert_eq!(pre3.chars().count(), 420);
    }

    #[test]
    fn empty_scaffold_is_delimiter_plus_prefix() {
        let cut = cut_with_suffix(&"z".repeat(60));
        let sp = build_scorer_prompt_equation(&cut, &ScoringCondition::empty()).unwrap();
        assert_eq!(
            sp.prompt_text,
            format!("{}{}", cut.opening_delimiter(), cut.prefix)
        );
        assert_eq!(
            sp.prompt_char_len,
            cut.opening_delimiter().chars().count() + cut.prefix.chars().count()
        );
    }

    #[test]
    fn forecast_without_z_and_oversized_control_error() {
        let cut = cut_with_suffix(&"z".repeat(60));
        let mut cond = ScoringCondition::forecast("m", String::new());
        cond.z_text = None;
        assert!(matches!(
            build_scorer_prompt_equation(&cut, &cond),
            Err(ScaffoldError::MissingZ(_))
        ));
        let mut big = ScoringCondition::same_budget(cut.budget_b);
        big.budget = Some(10_001);
        assert!(matches!(
            build_scorer_prompt_equation(&cut, &big),
            Err(ScaffoldError::InsufficientSource { .. })
        ));
    }

    #[test]
    fn embedded_forecast_is_truncated_to_budget() {
        let cut = cut_with_suffix(&"z".repeat(60));
        let long_z = "q".repeat(500);
        let cond = ScoringCondition::forecast("m", long_z);
        let sp = build_scorer_prompt_equation(&cut, &cond).unwrap();
        // budget_b = 100: exactly 100 q's embedded.
        assert!(sp.prompt_text.contains(&"q".repeat(100)));
        assert!(!sp.prompt_text.contains(&"q".repeat(101)));
    }

    #[test]
    fn truncation_counts_characters_not_bytes() {
        assert_eq!(truncate_forecast("abcdef", 4), "abcd");
        assert_eq!(truncate_forecast("ab", 10), "ab");
        // 4th char is multi-byte; a 3-char budget must end before it.
        assert_eq!(truncate_forecast("abc\u{00e9}f", 3), "abc");
        assert_eq!(truncate_forecast("\u{00e9}\u{00e9}\u{00e9}", 2), "\u{00e9}\u{00e9}");
    }

    fn prose_cut() -> ProseCut {
        ProseCut {
            cut_id: "p:p12000".into(),
            paper_id: "p".into(),
            cut_offset: 12_000,
            target_y: "t".repeat(2_000),
            context_pred: "x".repeat(10_000),
            pre2000: format!("{}{}", "a".repeat(1_000), "b".repeat(1_000)),
            pre3000: format!("{}{}{}", "0".repeat(1_000), "a".repeat(1_000), "b".repeat(1_000)),
            has_equation_material: false,
        }
    }

    #[test]
    fn prose_scaffold_embeds_budgeted_z_between_context_copies() {
        let cut = prose_cut();
        let z = "f".repeat(1_500);
        let cond = ScoringCondition::prose_forecast("m", z);
        let sp = build_scorer_prompt_prose(&cut, &cond, 1_000).unwrap();
        let expected = format!("{pre}\n\n{z}\n\n{pre}", pre = cut.pre2000, z = "f".repeat(1_000));
        assert_eq!(sp.prompt_text, expected);
        assert_eq!(sp.target_text, cut.target_y);

        // Empty forecast degenerates but still builds.
        let empty = ScoringCondition::prose_forecast("m", String::new());
        let sp2 = build_scorer_prompt_prose(&cut, &empty, 1_000).unwrap();
        assert_eq!(sp2.prompt_text, format!("{pre}\n\n\n\n{pre}", pre = cut.pre2000));
    }

    #[test]
    fn prose_context_control_is_pre3000_exactly() {
        let cut = prose_cut();
        let sp = build_scorer_prompt_prose(&cut, &ScoringCondition::prose_context(), 1_000).unwrap();
        assert_eq!(sp.prompt_text, cut.pre3000);
        assert_eq!(sp.target_text, cut.target_y);
    }

    #[test]
    fn cross_family_conditions_are_rejected() {
        let eq_cut = cut_with_suffix(&"z".repeat(60));
        let prose = prose_cut();
        assert!(matches!(
            build_scorer_prompt_equation(&eq_cut, &ScoringCondition::prose_context()),
            Err(ScaffoldError::WrongFamily(_))
        ));
        assert!(matches!(
            build_scorer_prompt_prose(&prose, &ScoringCondition::empty(), 1_000),
            Err(ScaffoldError::WrongFamily(_))
        ));
    }
}
