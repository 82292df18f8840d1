//! Prose/TeX continuation cuts at environment-safe paragraph breaks.
//!
//! A prose cut hides everything after a paragraph break, so the candidate
//! positions are blank-line boundaries at which every TeX environment opened
//! earlier has already closed (the hidden target must not begin mid-`align`).
//! The `document` environment is ignored for balance purposes — everything
//! lives inside it.

use super::{parse_env_name, ProseConfig, ProseCut, Rejection};
use crate::corpus::PaperSource;
use crate::digest::derive_seed;
use crate::textutil::CharText;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Extract prose cuts from one paper.
///
/// Candidates are paragraph breaks (maximal whitespace runs containing at
/// least two newlines); a cut lands at the first character after the run.
/// Filters: enough preceding context, enough remaining target, and balanced
/// environments at the boundary. When more candidates survive than the
/// per-paper cap, a seeded uniform sample (without replacement) keeps the
/// cap; the kept cuts stay in document order.
pub fn extract_prose_cuts(
    paper: &PaperSource,
    config: &ProseConfig,
    seed: u64,
) -> (Vec<ProseCut>, Vec<Rejection>) {
    let text = CharText::new(&paper.text);
    let pid = paper.paper_id.as_str();
    let depth_events = environment_events(&text);
    let mut rejections = Vec::new();
    let mut admissible: Vec<usize> = Vec::new();

    let mut event_idx = 0usize;
    let mut depth = 0i64;
    for boundary in paragraph_breaks(&text) {
        // Advance the running environment depth up to this boundary.
        while event_idx < depth_events.len() && depth_events[event_idx].0 < boundary {
            depth += depth_events[event_idx].1;
            event_idx += 1;
        }
        if boundary < config.context_chars {
            rejections.push(Rejection::new(pid, boundary, "insufficient-context"));
            continue;
        }
        if boundary + config.target_chars > text.len() {
            rejections.push(Rejection::new(pid, boundary, "insufficient-target"));
            continue;
        }
        if depth != 0 {
            rejections.push(Rejection::new(pid, boundary, "inside-environment"));
            continue;
        }
        admissible.push(boundary);
    }

    let kept: Vec<usize> = if admissible.len() > config.max_cuts_per_paper {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[pid, "prose"]));
        let mut picked =
            rand::seq::index::sample(&mut rng, admissible.len(), config.max_cuts_per_paper)
                .into_vec();
        picked.sort_unstable();
        let keep: std::collections::BTreeSet<usize> = picked.iter().copied().collect();
        for (i, &b) in admissible.iter().enumerate() {
            if !keep.contains(&i) {
                rejections.push(Rejection::new(pid, b, "per-paper-cap"));
            }
        }
        picked.into_iter().map(|i| admissible[i]).collect()
    } else {
        admissible
    };

    let cuts = kept
        .into_iter()
        .map(|c| {
            let target_y = text.slice(c, c + config.target_chars);
            ProseCut {
                cut_id: format!("{pid}:p{c}"),
                paper_id: pid.to_string(),
                cut_offset: c,
                has_equation_material: has_equation_material(
                    &target_y,
                    config.equation_scan_chars,
                ),
                context_pred: text.slice(c - config.context_chars, c),
                pre2000: text.slice(c - config.pre_short_chars, c),
                pre3000: text.slice(c - config.pre_long_chars, c),
                target_y,
            }
        })
        .collect();
    (cuts, rejections)
}

/// Positions just after each maximal whitespace run containing >= 2 newlines.
fn paragraph_breaks(text: &CharText) -> Vec<usize> {
    let mut breaks = Vec::new();
    let mut i = 0;
    let len = text.len();
    while i < len {
        if !text.char_at(i).is_some_and(char::is_whitespace) {
            i += 1;
            continue;
        }
        let run_start = i;
        let mut newlines = 0;
        while let Some(c) = text.char_at(i) {
            if !c.is_whitespace() {
                break;
            }
            if c == '\n' {
                newlines += 1;
            }
            i += 1;
        }
        if newlines >= 2 && run_start > 0 && i < len {
            breaks.push(i);
        }
    }
    breaks
}

/// Environment open/close events (+1/-1 by position), `document` excluded,
/// including bracket displays. Only active backslashes count.
fn environment_events(text: &CharText) -> Vec<(usize, i64)> {
    let mut events = Vec::new();
    let len = text.len();
    let mut i = 0;
    while i < len {
        if text.char_at(i) != Some('\\') || text.backslash_run_ending_at(i) % 2 == 0 {
            i += 1;
            continue;
        }
        if let Some(name) = parse_env_name(text, i, "\\begin{") {
            if name != "document" {
                events.push((i, 1));
            }
            i += "\\begin{}".len() + name.chars().count();
        } else if let Some(name) = parse_env_name(text, i, "\\end{") {
            if name != "document" {
                events.push((i, -1));
            }
            i += "\\end{}".len() + name.chars().count();
        } else if text.starts_with_at("\\[", i) {
            events.push((i, 1));
            i += 2;
        } else if text.starts_with_at("\\]", i) {
            events.push((i, -1));
            i += 2;
        } else {
            i += 1;
        }
    }
    events
}

/// Whether the first `scan_chars` characters of the target contain math
/// delimiters: `$`, `\(`, `\[`, or `\begin{...}`.
fn has_equation_material(target: &str, scan_chars: usize) -> bool {
    let text = CharText::new(target);
    let limit = scan_chars.min(text.len());
    let mut i = 0;
    while i < limit {
        match text.char_at(i) {
            Some('$') => {
                if i == 0 || text.backslash_run_ending_at(i - 1) % 2 == 0 {
                    return true;
                }
            }
            Some('\\') if text.backslash_run_ending_at(i) % 2 == 1 => {
                if text.starts_with_at("\\(", i)
                    || text.starts_with_at("\\[", i)
                    || parse_env_name(&text, i, "\\begin{").is_some()
                {
                    return true;
                }
            }
            _ => {}
        }
        i += 1;
    }
    false
}
