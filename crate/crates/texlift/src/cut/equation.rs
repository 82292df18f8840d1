//! Displayed-equation scanning and equation-suffix cut extraction.
//!
//! The cut rule is purely syntactic: scan displayed equations in document
//! order, require enough preceding context, split the body just after a
//! relation/operator token in its middle third, and keep the remaining
//! suffix as the hidden target if it has a reasonable length and does not
//! already appear verbatim in the context. The rule deliberately does not
//! judge mathematical interestingness.

use super::{CutConfig, EquationCut, Rejection};
use crate::digest::derive_seed;
use crate::textutil::CharText;
use log::debug;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One well-balanced displayed-equation occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationSpan {
    /// Environment name, or `[]` for `\[ ... \]`.
    pub env_name: String,
    /// Offset of the opening delimiter.
    pub eq_start: usize,
    /// Offsets of the body (everything between the delimiters).
    pub body_start: usize,
    pub body_end: usize,
    pub closing_delimiter: String,
}

/// A malformed construct the scanner skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanIssue {
    pub env_name: String,
    pub position: usize,
    pub reason: String,
}

/// Scan for displayed equations, in document order, outermost only.
///
/// A `\begin{env}` opens a span only when its backslash is "active" (odd run
/// of preceding backslashes, so `\\[2pt]` and `\\begin` inside a row break
/// are not misread). Nested occurrences of the same environment are tracked
/// so the span closes at the matching `\end`; the scan resumes after the
/// close, which is what makes inner environments invisible. Unclosed
/// environments are skipped and reported.
pub fn scan_display_equations(text: &CharText, config: &CutConfig) -> (Vec<EquationSpan>, Vec<ScanIssue>) {
    let mut spans = Vec::new();
    let mut issues = Vec::new();
    let len = text.len();
    let mut i = 0;
    while i < len {
        if text.char_at(i) != Some('\\') || !active_backslash(text, i) {
            i += 1;
            continue;
        }
        if let Some(name) = parse_begin(text, i) {
            if config.environments.iter().any(|e| e == &name) {
                let body_start = i + "\\begin{}".len() + name.chars().count();
                match find_matching_end(text, body_start, &name) {
                    Some(end_pos) => {
                        spans.push(EquationSpan {
                            env_name: name.clone(),
                            eq_start: i,
                            body_start,
                            body_end: end_pos,
                            closing_delimiter: format!("\\end{{{name}}}"),
                        });
                        i = end_pos + "\\end{}".len() + name.chars().count();
                        continue;
                    }
                    None => {
                        issues.push(ScanIssue {
                            env_name: name.clone(),
                            position: i,
                            reason: "unclosed environment".to_string(),
                        });
                        debug!("unclosed \\begin{{{name}}} at {i}");
                        i = body_start;
                        continue;
                    }
                }
            }
        } else if config.bracket_display && text.starts_with_at("\\[", i) {
            let body_start = i + 2;
            match find_active(text, body_start, "\\]") {
                Some(end_pos) => {
                    spans.push(EquationSpan {
                        env_name: "[]".to_string(),
                        eq_start: i,
                        body_start,
                        body_end: end_pos,
                        closing_delimiter: "\\]".to_string(),
                    });
                    i = end_pos + 2;
                    continue;
                }
                None => {
                    issues.push(ScanIssue {
                        env_name: "[]".to_string(),
                        position: i,
                        reason: "unclosed bracket display".to_string(),
                    });
                    i = body_start;
                    continue;
                }
            }
        }
        i += 1;
    }
    (spans, issues)
}

/// Whether the backslash at `idx` starts a control sequence (odd run).
fn active_backslash(text: &CharText, idx: usize) -> bool {
    text.backslash_run_ending_at(idx) % 2 == 1
}

/// Parse `\begin{name}` at `idx`; returns the environment name.
fn parse_begin(text: &CharText, idx: usize) -> Option<String> {
    super::parse_env_name(text, idx, "\\begin{")
}

/// Find the `\end{name}` matching an already-open environment, tracking
/// nested re-openings of the same name. Returns the offset of its backslash.
fn find_matching_end(text: &CharText, from: usize, name: &str) -> Option<usize> {
    let mut depth = 1usize;
    let mut i = from;
    while i < text.len() {
        if text.char_at(i) == Some('\\') && active_backslash(text, i) {
            if let Some(n) = parse_begin(text, i) {
                if n == name {
                    depth += 1;
                }
            } else if let Some(n) = super::parse_env_name(text, i, "\\end{") {
                if n == name {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i);
                    }
                }
            }
        }
        i += 1;
    }
    None
}

/// Find the next active occurrence of a backslash token such as `\]`.
fn find_active(text: &CharText, from: usize, token: &str) -> Option<usize> {
    let mut i = from;
    while i < text.len() {
        if text.char_at(i) == Some('\\')
            && active_backslash(text, i)
            && text.starts_with_at(token, i)
        {
            return Some(i);
        }
        i += 1;
    }
    None
}

/// Choose where to split an equation body.
///
/// Candidates are positions immediately after a configured operator token
/// whose offset lies in the middle third of the body (closed bounds, exact
/// integer arithmetic: `3*pos >= len` and `3*pos <= 2*len`). One candidate
/// is picked by a seeded uniform draw; `None` when no position qualifies.
pub fn select_cut_site(body: &str, seed: u64, operators: &[String]) -> Option<usize> {
    let text = CharText::new(body);
    let len = text.len();
    let mut candidates: Vec<usize> = Vec::new();
    for op in operators {
        let op_len = op.chars().count();
        let mut from = 0;
        while let Some(pos) = text.find(op, from) {
            from = pos + 1;
            let end = pos + op_len;
            if !operator_match_is_token(&text, pos, op) {
                continue;
            }
            if 3 * end >= len && 3 * end <= 2 * len {
                candidates.push(end);
            }
        }
    }
    if candidates.is_empty() {
        return None;
    }
    candidates.sort_unstable();
    candidates.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Some(candidates[rng.gen_range(0..candidates.len())])
}

/// Token-level operator matching.
///
/// Control-word operators (`\le`, `\in`, ...) must start at an active
/// backslash and must not continue as a longer word (`\left`, `\leq`,
/// `\int`). Single-character operators must not be escaped.
fn operator_match_is_token(text: &CharText, pos: usize, op: &str) -> bool {
    let op_len = op.chars().count();
    if op.starts_with('\\') {
        if !active_backslash(text, pos) {
            return false;
        }
        let next = text.char_at(pos + op_len);
        !next.is_some_and(|c| c.is_ascii_alphabetic())
    } else {
        // An odd backslash run just before a single-char operator escapes it.
        pos == 0 || text.backslash_run_ending_at(pos - 1) % 2 == 0
    }
}

/// Apply the full equation-cut rule to one paper.
///
/// Filter order: scan, context requirement, site selection, suffix length,
/// verbatim-context exclusion, equation-key dedup, then the per-paper cap in
/// document order. Returns the cuts plus one rejection record per candidate
/// that fell out, for the extraction report.
pub fn extract_equation_cuts(
    paper: &crate::corpus::PaperSource,
    config: &CutConfig,
    seed: u64,
) -> (Vec<EquationCut>, Vec<Rejection>) {
    let text = CharText::new(&paper.text);
    let pid = paper.paper_id.as_str();
    let (spans, issues) = scan_display_equations(&text, config);
    let mut rejections: Vec<Rejection> = issues
        .iter()
        .map(|iss| Rejection::new(pid, iss.position, &format!("malformed: {}", iss.reason)))
        .collect();
    let mut cuts: Vec<EquationCut> = Vec::new();
    let mut seen_keys = std::collections::BTreeSet::new();
    for span in &spans {
        let equation_key = format!("{pid}:{}", span.eq_start);
        if span.eq_start < config.context_chars {
            rejections.push(Rejection::new(pid, span.eq_start, "insufficient-context"));
            continue;
        }
        let body = text.slice(span.body_start, span.body_end);
        let site_seed = derive_seed(seed, &[pid, &span.eq_start.to_string()]);
        let Some(site) = select_cut_site(&body, site_seed, &config.operators) else {
            rejections.push(Rejection::new(pid, span.eq_start, "no-operator-site"));
            continue;
        };
        let cut_offset = span.body_start + site;
        let suffix_len = span.body_end - cut_offset;
        if suffix_len < config.min_suffix_chars || suffix_len > config.max_suffix_chars {
            rejections.push(Rejection::new(pid, span.eq_start, "suffix-length"));
            continue;
        }
        let context_chars = text.slice(span.eq_start - config.context_chars, span.eq_start);
        let suffix_y = text.slice(cut_offset, span.body_end);
        if context_chars.contains(&suffix_y) {
            rejections.push(Rejection::new(pid, span.eq_start, "verbatim-context"));
            continue;
        }
        if !seen_keys.insert(equation_key.clone()) {
            rejections.push(Rejection::new(pid, span.eq_start, "duplicate-equation-key"));
            continue;
        }
        cuts.push(EquationCut {
            cut_id: format!("{pid}:e{}", span.eq_start),
            paper_id: pid.to_string(),
            env_name: span.env_name.clone(),
            eq_start: span.eq_start,
            body_start: span.body_start,
            body_end: span.body_end,
            cut_offset,
            prefix: text.slice(span.body_start, cut_offset),
            suffix_y,
            closing_delimiter: span.closing_delimiter.clone(),
            context_chars,
            budget_b: suffix_len + config.budget_slack,
            equation_key,
        });
    }
    if cuts.len() > config.max_cuts_per_paper {
        for dropped in &cuts[config.max_cuts_per_paper..] {
            rejections.push(Rejection::new(pid, dropped.eq_start, "per-paper-cap"));
        }
        cuts.truncate(config.max_cuts_per_paper);
    }
    (cuts, rejections)
}
