//! A tiny controlled probe of the scoring scaffold.
//!
//! Four two-symbol targets (`X + A + B`, `X + B + A`, and the juxtaposed
//! products `X + AB`, `X + BA`) are each scored under five scaffold
//! conditions: an exact forecast, a reordered forecast (right symbols, wrong
//! local order), a wrong-symbol forecast, a vague context sentence, and an
//! empty scaffold. The probe shows, in isolation, how clipping lets a
//! locally-wrong-but-symbolically-right forecast recover: it pays a bounded
//! cost at the mismatch, then keeps credit for the easy later tokens.
//!
//! The recovery-point probability makes the mechanism visible at token
//! level: the probability assigned to the target's final symbol, where a
//! reordered forecast has already diverged and the scorer must still pick
//! the right continuation.

use super::pipeline::{record_stage, StageOutcome};
use super::RunContext;
use crate::gateway::{Gateway, ScoreRecord, Scorer};
use crate::metrics::{score, MetricKind};
use crate::scaffold::ScoredPrompt;
use crate::textutil::char_len;
use anyhow::{Context, Result};
use std::fmt::Write as _;

/// Probe cases: display label, scored target (with its leading space), and
/// the reordered forecast's body.
const CASES: [(&str, &str, &str); 4] = [
    ("X+A+B", " X + A + B", "X + B + A"),
    ("X+B+A", " X + B + A", "X + A + B"),
    ("X+AB", " X + AB", "X + BA"),
    ("X+BA", " X + BA", "X + AB"),
];

/// Condition labels in report order.
pub const CONDITIONS: [&str; 5] = ["exact", "reordered", "wrong_symbol", "context", "empty"];

const EQUATION_PREFIX: &str = "Z =";
const CONTEXT_SENTENCE: &str = "Here are some equations involving some sums.";

/// The scaffold shown before scoring: a completed first equation containing
/// the forecast, then the same equation prefix again.
fn forecast_block(forecast_body: &str) -> String {
    format!("% First equation:\n{EQUATION_PREFIX} {forecast_body}\n% Same equation:\n{EQUATION_PREFIX}")
}

fn prompt_for(case_target: &str, reordered_body: &str, condition: &str) -> String {
    match condition {
        "exact" => forecast_block(case_target.trim_start()),
        "reordered" => forecast_block(reordered_body),
        "wrong_symbol" => forecast_block("X + Y"),
        "context" => format!("{CONTEXT_SENTENCE}\n{EQUATION_PREFIX}"),
        "empty" => EQUATION_PREFIX.to_string(),
        other => unreachable!("unknown probe condition {other}"),
    }
}

/// One scored probe cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub case_label: String,
    pub condition: String,
    /// Mean per-token log-likelihood of the target.
    pub raw: f64,
    /// Headline clipped score of the target.
    pub clip2: f64,
    /// Clipped score minus the same case's empty-scaffold clipped score.
    pub vs_empty: f64,
    /// Probability assigned to the target's final symbol.
    pub recovery_p: f64,
}

/// Probability of the token covering the last target character.
fn recovery_probability(record: &ScoreRecord, full_char_len: usize) -> Result<f64> {
    let last = full_char_len
        .checked_sub(1)
        .context("probe target is empty")?;
    let token = record
        .tokens
        .iter()
        .find(|(start, end, _)| *start <= last && last < *end)
        .context("no token covers the final target character")?;
    Ok(token.2.exp())
}

/// Score all probe cells with one scorer. Rows come back in case-major,
/// condition-minor order matching [`CASES`] and [`CONDITIONS`].
pub fn probe_rows(gateway: &Gateway, scorer: &dyn Scorer) -> Result<Vec<ProbeRow>> {
    let mut rows = Vec::with_capacity(CASES.len() * CONDITIONS.len());
    for (case_label, target, reordered_body) in CASES {
        let mut case_rows = Vec::with_capacity(CONDITIONS.len());
        for condition in CONDITIONS {
            let prompt_text = prompt_for(target, reordered_body, condition);
            let sp = ScoredPrompt {
                cut_id: format!("probe:{case_label}"),
                condition: condition.to_string(),
                prompt_char_len: char_len(&prompt_text),
                prompt_text,
                target_text: target.to_string(),
            };
            let full_len = sp.prompt_char_len + char_len(&sp.target_text);
            let record = gateway.score_target(scorer, &sp)?;
            let lams = record.target_lambdas();
            case_rows.push(ProbeRow {
                case_label: case_label.to_string(),
                condition: condition.to_string(),
                raw: score(&lams, MetricKind::RawLl)?,
                clip2: score(&lams, MetricKind::headline())?,
                vs_empty: 0.0,
                recovery_p: recovery_probability(&record, full_len)?,
            });
        }
        let empty_clip2 = case_rows
            .last()
            .expect("conditions end with the empty scaffold")
            .clip2;
        for row in &mut case_rows {
            row.vs_empty = row.clip2 - empty_clip2;
        }
        rows.extend(case_rows);
    }
    Ok(rows)
}

/// Render the probe report: one score table, one recovery-probability table.
pub fn render_report(scorer_id: &str, rows: &[ProbeRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Scaffold probe ({scorer_id})\n");
    let _ = writeln!(
        out,
        "Each target is scored after a scaffold that embeds an exact, reordered,\n\
         or wrong-symbol forecast, a vague context sentence, or nothing. `raw` is\n\
         the mean per-token log-likelihood; `clip_ll_2` floors each token at -2;\n\
         `vs_empty` is the clipped score minus the empty-scaffold row.\n"
    );
    let _ = writeln!(out, "| case | condition | raw | clip_ll_2 | vs_empty |");
    let _ = writeln!(out, "|---|---|---:|---:|---:|");
    for row in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.3} | {:.3} | {:+.3} |",
            row.case_label, row.condition, row.raw, row.clip2, row.vs_empty
        );
    }
    let _ = writeln!(
        out,
        "\nProbability assigned to the target's final symbol (the recovery point,\n\
         where a reordered forecast has already diverged from the target):\n"
    );
    let _ = writeln!(out, "| case | exact | reordered | wrong_symbol | context | empty |");
    let _ = writeln!(out, "|---|---:|---:|---:|---:|---:|");
    for case in rows.chunks(CONDITIONS.len()) {
        let cells: Vec<String> = case.iter().map(|r| format!("{:.3}", r.recovery_p)).collect();
        let _ = writeln!(out, "| {} | {} |", case[0].case_label, cells.join(" | "));
    }
    out
}

/// Run the probe against one scorer and write `probe_report.md`.
pub fn run_probe(ctx: &RunContext, scorer_spec: Option<&str>) -> Result<StageOutcome> {
    let scorers = ctx.build_scorers(
        &scorer_spec.map(|s| vec![s.to_string()]).unwrap_or_default(),
    )?;
    let scorer = scorers.first().context("no scorer resolved")?;
    let (rows, provider_calls, cache_hits) =
        ctx.with_gateway(|gateway| probe_rows(gateway, scorer.as_ref()))?;
    std::fs::write(
        ctx.path("probe_report.md"),
        render_report(scorer.id(), &rows),
    )?;
    let outcome = StageOutcome {
        records: rows.len(),
        provider_calls,
        cache_hits,
    };
    record_stage(ctx, "probe", "probe_report.md", outcome)?;
    Ok(outcome)
}
