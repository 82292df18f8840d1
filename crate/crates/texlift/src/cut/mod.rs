//! Cut extraction: slicing papers into hidden-continuation tasks.
//!
//! Two cut families share this module. Equation-suffix cuts hide the tail of
//! a displayed equation ([`equation`]); prose cuts hide a multi-paragraph
//! continuation starting at an environment-safe paragraph break ([`prose`]).
//! Both are pure functions of `(paper, config, seed)` and must produce
//! bit-identical output across runs — every random choice is drawn from an
//! RNG seeded per decision point.

pub mod equation;
pub mod prose;

use crate::textutil::CharText;
use serde::{Deserialize, Serialize};

/// Parse the environment name of `\begin{name}` / `\end{name}` at `idx`,
/// where `command` is the prefix up to and including the opening brace.
/// Names are alphabetic with an optional trailing `*`.
pub(crate) fn parse_env_name(text: &CharText, idx: usize, command: &str) -> Option<String> {
    if !text.starts_with_at(command, idx) {
        return None;
    }
    let mut name = String::new();
    let mut j = idx + command.chars().count();
    loop {
        match text.char_at(j)? {
            '}' => return if name.is_empty() { None } else { Some(name) },
            c if c.is_ascii_alphabetic() || c == '*' => name.push(c),
            _ => return None,
        }
        j += 1;
    }
}

/// One equation-suffix prediction task.
///
/// All offsets index characters of the flattened paper text. The hidden
/// target is `suffix_y` plus `closing_delimiter`; everything before
/// `cut_offset` may be shown to models in some form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationCut {
    pub cut_id: String,
    pub paper_id: String,
    /// Environment name, or `[]` for a bracket display.
    pub env_name: String,
    /// Offset of the opening delimiter's first character.
    pub eq_start: usize,
    pub body_start: usize,
    pub body_end: usize,
    /// Offset where the body splits; the operator ending here stays in the prefix.
    pub cut_offset: usize,
    pub prefix: String,
    pub suffix_y: String,
    pub closing_delimiter: String,
    /// Exactly the 10,000 characters preceding `eq_start`.
    pub context_chars: String,
    /// Character budget for the auxiliary string: |suffix_y| + slack.
    pub budget_b: usize,
    /// Unique id of the displayed-equation occurrence this cut came from.
    pub equation_key: String,
}

impl EquationCut {
    /// The opening delimiter as it appears in source.
    pub fn opening_delimiter(&self) -> String {
        if self.env_name == "[]" {
            "\\[".to_string()
        } else {
            format!("\\begin{{{}}}", self.env_name)
        }
    }
}

/// One prose/TeX continuation task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProseCut {
    pub cut_id: String,
    pub paper_id: String,
    /// Paragraph-break offset where the hidden continuation starts.
    pub cut_offset: usize,
    pub target_y: String,
    /// The 10,000 characters preceding the cut (predictor context).
    pub context_pred: String,
    /// Last 2,000 characters before the target; suffix of `pre3000`.
    pub pre2000: String,
    /// Last 3,000 characters before the target.
    pub pre3000: String,
    /// Whether the scored head of the target contains math delimiters.
    pub has_equation_material: bool,
}

/// Why a candidate location produced no cut; feeds the extraction report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub paper_id: String,
    /// Character offset of the candidate (equation start or paragraph break).
    pub location: usize,
    pub reason: String,
}

impl Rejection {
    fn new(paper_id: &str, location: usize, reason: &str) -> Self {
        Self {
            paper_id: paper_id.to_string(),
            location,
            reason: reason.to_string(),
        }
    }
}

/// Equation-cut extraction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutConfig {
    /// Display environments recognized by the scanner.
    pub environments: Vec<String>,
    /// Also recognize `\[ ... \]` displays.
    pub bracket_display: bool,
    /// Relation/operator tokens; a cut lands immediately after one.
    pub operators: Vec<String>,
    /// Required context before the opening delimiter; retained exactly.
    pub context_chars: usize,
    pub min_suffix_chars: usize,
    pub max_suffix_chars: usize,
    pub max_cuts_per_paper: usize,
    /// Auxiliary-string budget is |suffix| plus this slack.
    pub budget_slack: usize,
}

impl Default for CutConfig {
    fn default() -> Self {
        Self {
            environments: [
                "equation",
                "equation*",
                "align",
                "align*",
                "gather",
                "gather*",
                "multline",
                "multline*",
                "eqnarray",
                "eqnarray*",
                "displaymath",
            ]
            .map(String::from)
            .to_vec(),
            bracket_display: true,
            operators: [
                "=", "+", "-", "<", ">", "\\le", "\\leq", "\\ge", "\\geq", "\\sim", "\\simeq",
                "\\approx", "\\equiv", "\\propto", "\\to", "\\mapsto", "\\subset", "\\in",
            ]
            .map(String::from)
            .to_vec(),
            context_chars: 10_000,
            min_suffix_chars: 50,
            max_suffix_chars: 400,
            max_cuts_per_paper: 10,
            budget_slack: 40,
        }
    }
}

/// Prose-cut extraction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProseConfig {
    pub context_chars: usize,
    /// Hidden-continuation length.
    pub target_chars: usize,
    pub pre_short_chars: usize,
    pub pre_long_chars: usize,
    /// Character budget the forecast is truncated to at scoring time.
    pub forecast_budget_chars: usize,
    /// How far into the target to look for equation material.
    pub equation_scan_chars: usize,
    /// Continuation length the predictor is asked for.
    pub request_chars: usize,
    pub max_cuts_per_paper: usize,
}

impl Default for ProseConfig {
    fn default() -> Self {
        Self {
            context_chars: 10_000,
            target_chars: 2_000,
            pre_short_chars: 2_000,
            pre_long_chars: 3_000,
            forecast_budget_chars: 1_000,
            equation_scan_chars: 1_800,
            request_chars: 1_800,
            max_cuts_per_paper: 20,
        }
    }
}
