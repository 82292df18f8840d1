//! Aggregation stage: score records in, contrast tables out.
//!
//! For every (scorer, metric, window, contrast) cell the stage computes the
//! paired per-cut lift, its paper-clustered mean and standard error, and the
//! fraction of cuts with strictly positive lift. Cuts whose records straddle
//! the prompt/target boundary (or scored zero target tokens) are excluded
//! from every contrast for that scorer, keeping all contrasts paired over
//! one common cut set.

use super::pipeline::{AnyCut, StageOutcome};
use super::RunContext;
use crate::analysis::{ecdf, paired_contrast, PerCutValue};
use crate::gateway::ScoreRecord;
use crate::jsonl::read_jsonl;
use crate::metrics::{score, window_score, MetricKind, TokenLogLikelihoods};
use anyhow::{Context, Result};
use log::warn;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

/// Default target-token windows: the whole target plus four fixed prefixes.
pub const DEFAULT_WINDOWS: [Option<usize>; 5] =
    [None, Some(50), Some(100), Some(200), Some(400)];

pub fn window_label(window: Option<usize>) -> String {
    match window {
        None => "full".to_string(),
        Some(n) => n.to_string(),
    }
}

/// The contrasts implied by a set of condition labels: every non-baseline
/// condition against the family baseline, plus forecast-bearing conditions
/// against the same-budget control. Sorted for stable output.
pub fn contrasts_for(conditions: &BTreeSet<String>) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    if conditions.contains("empty") {
        for c in conditions {
            if c != "empty" {
                out.push((c.clone(), "empty".to_string()));
            }
        }
        if conditions.contains("same_budget") {
            for c in conditions {
                if c == "true_suffix" || c.starts_with("forecast:") {
                    out.push((c.clone(), "same_budget".to_string()));
                }
            }
        }
    }
    if conditions.contains("prose_context") {
        for c in conditions {
            if c.starts_with("prose_forecast:") {
                out.push((c.clone(), "prose_context".to_string()));
            }
        }
    }
    out.sort();
    out
}

/// Per-scorer score table: lambdas indexed by condition then cut.
struct ScorerTable<'a> {
    lambdas: BTreeMap<&'a str, BTreeMap<&'a str, TokenLogLikelihoods>>,
    conditions: BTreeSet<String>,
}

impl<'a> ScorerTable<'a> {
    /// Build the lookup table, dropping excluded cuts entirely.
    fn build(records: &[&'a ScoreRecord]) -> Self {
        let mut excluded: BTreeSet<&str> = BTreeSet::new();
        for r in records {
            if r.straddle_flag {
                warn!("excluding {}: straddling target token", r.cut_id);
                excluded.insert(&r.cut_id);
            } else if r.target_token_indices.is_empty() {
                warn!("excluding {}: no scored target tokens", r.cut_id);
                excluded.insert(&r.cut_id);
            }
        }
        let mut lambdas: BTreeMap<&str, BTreeMap<&str, TokenLogLikelihoods>> = BTreeMap::new();
        let mut conditions = BTreeSet::new();
        for r in records {
            if excluded.contains(r.cut_id.as_str()) {
                continue;
            }
            conditions.insert(r.condition.clone());
            lambdas
                .entry(r.condition.as_str())
                .or_default()
                .insert(&r.cut_id, r.target_lambdas());
        }
        Self { lambdas, conditions }
    }

    /// Per-cut metric values for one condition, in cut-id order.
    fn values(
        &self,
        condition: &str,
        metric: MetricKind,
        window: Option<usize>,
        paper_of: &BTreeMap<String, String>,
    ) -> Result<Vec<PerCutValue>> {
        let cuts = self
            .lambdas
            .get(condition)
            .with_context(|| format!("no records for condition `{condition}`"))?;
        cuts.iter()
            .map(|(cut_id, lams)| {
                let value = match window {
                    None => score(lams, metric),
                    Some(n) => window_score(lams, n, metric),
                }
                .with_context(|| format!("scoring {cut_id} `{condition}`"))?;
                Ok(PerCutValue {
                    cut_id: (*cut_id).to_string(),
                    paper_id: paper_of
                        .get(*cut_id)
                        .with_context(|| format!("cut {cut_id} missing from cut file"))?
                        .clone(),
                    value,
                })
            })
            .collect()
    }
}

/// Compute every contrast table and write `aggregates.csv` and `ecdf.csv`.
pub fn run_analyze(
    ctx: &RunContext,
    metric_names: &[String],
    window_args: &[usize],
) -> Result<StageOutcome> {
    let cuts: Vec<AnyCut> = read_jsonl(&ctx.path("cuts.jsonl"))?;
    let records: Vec<ScoreRecord> = read_jsonl(&ctx.path("scores.jsonl"))?;
    let paper_of: BTreeMap<String, String> = cuts
        .iter()
        .map(|c| (c.cut_id().to_string(), c.paper_id().to_string()))
        .collect();

    let metrics: Vec<MetricKind> = if metric_names.is_empty() {
        MetricKind::standard_suite()
    } else {
        metric_names
            .iter()
            .map(|name| name.parse().map_err(anyhow::Error::from))
            .collect::<Result<_>>()?
    };
    let windows: Vec<Option<usize>> = if window_args.is_empty() {
        DEFAULT_WINDOWS.to_vec()
    } else {
        window_args.iter().map(|&n| Some(n)).collect()
    };

    let mut by_scorer: BTreeMap<&str, Vec<&ScoreRecord>> = BTreeMap::new();
    for r in &records {
        by_scorer.entry(r.scorer_id.as_str()).or_default().push(r);
    }

    let mut csv = String::from("contrast,mean,se,n_cuts,n_papers,frac_positive,metric,scorer,window\n");
    let mut ecdf_csv = String::from("contrast,scorer,x,cdf\n");
    let mut rows = 0usize;
    for (scorer_id, scorer_records) in &by_scorer {
        let table = ScorerTable::build(scorer_records);
        let contrasts = contrasts_for(&table.conditions);
        for &metric in &metrics {
            for &window in &windows {
                for (lhs_cond, rhs_cond) in &contrasts {
                    let lhs = table.values(lhs_cond, metric, window, &paper_of)?;
                    let rhs = table.values(rhs_cond, metric, window, &paper_of)?;
                    let contrast_id = format!("{lhs_cond}~{rhs_cond}");
                    let agg = paired_contrast(&contrast_id, &lhs, &rhs)?;
                    writeln!(
                        csv,
                        "{},{:.6},{:.6},{},{},{:.6},{},{},{}",
                        agg.contrast_id,
                        agg.mean,
                        agg.clustered_se,
                        agg.n_cuts,
                        agg.n_papers,
                        agg.frac_positive,
                        metric,
                        scorer_id,
                        window_label(window)
                    )?;
                    rows += 1;

                    // Per-cut lift distribution, headline metric only.
                    if metric == MetricKind::headline() && window.is_none() {
                        let diffs: Vec<f64> = lhs
                            .iter()
                            .zip(&rhs)
                            .map(|(l, r)| l.value - r.value)
                            .collect();
                        for (x, f) in ecdf(&diffs) {
                            writeln!(ecdf_csv, "{contrast_id},{scorer_id},{x:.6},{f:.6}")?;
                        }
                    }
                }
            }
        }
    }

    std::fs::write(ctx.path("aggregates.csv"), &csv)?;
    std::fs::write(ctx.path("ecdf.csv"), &ecdf_csv)?;
    let outcome = StageOutcome {
        records: rows,
        provider_calls: 0,
        cache_hits: 0,
    };
    super::pipeline::record_stage(ctx, "analyze", "aggregates.csv", outcome)?;
    Ok(outcome)
}
