//! File-to-file pipeline stages: ingest, cut, forecast, score.
//!
//! Each stage reads its upstream artifact, writes exactly one downstream
//! artifact in input order, and records the result in the run manifest.
//! Stages are referentially transparent given the call cache: rerunning a
//! stage with unchanged inputs rewrites byte-identical output.

use super::RunContext;
use crate::config::Mode;
use crate::corpus::{load_archive, PaperSource};
use crate::cut::equation::extract_equation_cuts;
use crate::cut::prose::extract_prose_cuts;
use crate::cut::{EquationCut, ProseCut, Rejection};
use crate::gateway::{bounded_parallel, Forecast, GatewayError, Predictor, ScoreRecord};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::manifest::RunManifest;
use crate::scaffold::{
    build_predictor_prompt_equation, build_predictor_prompt_prose, build_scorer_prompt_equation,
    build_scorer_prompt_prose, ScoredPrompt, ScoringCondition, DEFAULT_PROSE_PREDICTOR_TEMPLATE,
};
use anyhow::{bail, Context, Result};
use log::{error, info, warn};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// What a finished stage reports to the caller and the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageOutcome {
    pub records: usize,
    pub provider_calls: u64,
    pub cache_hits: u64,
}

impl StageOutcome {
    fn local(records: usize) -> Self {
        Self {
            records,
            provider_calls: 0,
            cache_hits: 0,
        }
    }
}

/// A cut of either family, tagged so downstream stages need no mode flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AnyCut {
    Equation(EquationCut),
    Prose(ProseCut),
}

impl AnyCut {
    pub fn cut_id(&self) -> &str {
        match self {
            AnyCut::Equation(c) => &c.cut_id,
            AnyCut::Prose(c) => &c.cut_id,
        }
    }

    pub fn paper_id(&self) -> &str {
        match self {
            AnyCut::Equation(c) => &c.paper_id,
            AnyCut::Prose(c) => &c.paper_id,
        }
    }
}

fn load_manifest(ctx: &RunContext) -> RunManifest {
    RunManifest::load_or_new(
        &ctx.run_dir,
        &ctx.config.digest(),
        ctx.seed(),
        &ctx.mode().to_string(),
    )
}

pub(super) fn record_stage(
    ctx: &RunContext,
    stage: &str,
    artifact: &str,
    outcome: StageOutcome,
) -> Result<()> {
    let mut manifest = load_manifest(ctx);
    manifest.record_stage(
        stage,
        &ctx.run_dir,
        artifact,
        outcome.records,
        outcome.provider_calls,
        outcome.cache_hits,
    )
}

/// Paper id from a source path: the file name with archive extensions
/// stripped, so `alpha.tex` and `zeta.tar.gz` become `alpha` and `zeta`.
pub fn paper_id_from_path(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned());
    for ext in [".tar.gz", ".tgz", ".tar", ".tex", ".gz"] {
        if let Some(stem) = name.strip_suffix(ext) {
            return stem.to_string();
        }
    }
    name
}

/// Decode each source into the corpus file. A paper that fails to decode is
/// logged and skipped; the batch continues.
pub fn run_ingest(ctx: &RunContext, paths: &[PathBuf]) -> Result<StageOutcome> {
    let mut papers: Vec<PaperSource> = Vec::new();
    let mut failures = 0usize;
    for path in paths {
        let paper_id = paper_id_from_path(path);
        let bytes =
            std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let tags = ctx
            .config
            .corpus
            .tags
            .get(&paper_id)
            .cloned()
            .unwrap_or_default();
        match load_archive(&bytes, &paper_id, &path.to_string_lossy(), tags) {
            Ok(paper) => {
                let filters = &ctx.config.corpus;
                if paper.char_count() < filters.min_chars {
                    info!("skipping {} (shorter than {} chars)", paper.paper_id, filters.min_chars);
                    continue;
                }
                if !filters.keep_keywords.is_empty()
                    && !filters.keep_keywords.iter().any(|k| paper.text.contains(k))
                {
                    info!("skipping {} (no configured keyword)", paper.paper_id);
                    continue;
                }
                info!("ingested {} ({} chars)", paper.paper_id, paper.char_count());
                papers.push(paper);
            }
            Err(e) => {
                failures += 1;
                error!("skipping {}: {e}", path.display());
            }
        }
    }
    if papers.is_empty() {
        bail!("no paper decoded ({failures} of {} failed)", paths.len());
    }
    write_jsonl(&ctx.path("corpus.jsonl"), &papers)?;
    let outcome = StageOutcome::local(papers.len());
    record_stage(ctx, "ingest", "corpus.jsonl", outcome)?;
    Ok(outcome)
}

/// Extract cuts for the configured mode and write both the cut file and the
/// rejection report.
pub fn run_cut(ctx: &RunContext) -> Result<StageOutcome> {
    let papers: Vec<PaperSource> = read_jsonl(&ctx.path("corpus.jsonl"))?;
    let mut cuts: Vec<AnyCut> = Vec::new();
    let mut rejections: Vec<Rejection> = Vec::new();
    for paper in &papers {
        match ctx.mode() {
            Mode::Equation => {
                let (c, r) = extract_equation_cuts(paper, &ctx.config.cut, ctx.seed());
                cuts.extend(c.into_iter().map(AnyCut::Equation));
                rejections.extend(r);
            }
            Mode::Prose => {
                let (c, r) = extract_prose_cuts(paper, &ctx.config.prose, ctx.seed());
                cuts.extend(c.into_iter().map(AnyCut::Prose));
                rejections.extend(r);
            }
        }
    }
    let mut by_reason: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rejections {
        *by_reason.entry(r.reason.as_str()).or_default() += 1;
    }
    info!(
        "extracted {} {} cuts from {} papers; {} rejections: {:?}",
        cuts.len(),
        ctx.mode(),
        papers.len(),
        rejections.len(),
        by_reason
    );
    write_jsonl(&ctx.path("cuts.jsonl"), &cuts)?;
    write_jsonl(&ctx.path("rejections.jsonl"), &rejections)?;
    let outcome = StageOutcome::local(cuts.len());
    record_stage(ctx, "cut", "cuts.jsonl", outcome)?;
    Ok(outcome)
}

fn prose_template(ctx: &RunContext) -> &str {
    ctx.config
        .scaffold
        .prose_predictor_template
        .as_deref()
        .unwrap_or(DEFAULT_PROSE_PREDICTOR_TEMPLATE)
}

/// One forecast job: everything a worker needs to call a predictor.
struct ForecastJob<'a> {
    cut_id: &'a str,
    prompt: String,
    true_continuation: &'a str,
    budget: usize,
    predictor: &'a dyn Predictor,
}

/// Generate one forecast per (cut, predictor) in deterministic order.
pub fn run_forecast(ctx: &RunContext, predictor_specs: &[String]) -> Result<StageOutcome> {
    let cuts: Vec<AnyCut> = read_jsonl(&ctx.path("cuts.jsonl"))?;
    let predictors = ctx.build_predictors(predictor_specs)?;

    let mut jobs: Vec<ForecastJob> = Vec::with_capacity(cuts.len() * predictors.len());
    for cut in &cuts {
        for predictor in &predictors {
            let job = match cut {
                AnyCut::Equation(c) => ForecastJob {
                    cut_id: &c.cut_id,
                    prompt: build_predictor_prompt_equation(c),
                    true_continuation: &c.suffix_y,
                    budget: c.budget_b,
                    predictor: predictor.as_ref(),
                },
                AnyCut::Prose(c) => ForecastJob {
                    cut_id: &c.cut_id,
                    prompt: build_predictor_prompt_prose(
                        c,
                        prose_template(ctx),
                        ctx.config.prose.request_chars,
                    ),
                    true_continuation: &c.target_y,
                    budget: ctx.config.prose.forecast_budget_chars,
                    predictor: predictor.as_ref(),
                },
            };
            jobs.push(job);
        }
    }

    let (results, provider_calls, cache_hits) = ctx.with_gateway(|gateway| {
        Ok(bounded_parallel(&jobs, ctx.config.run.max_in_flight, |job| {
            gateway.generate_forecast(
                job.predictor,
                job.cut_id,
                &job.prompt,
                Some(job.true_continuation),
                job.budget,
            )
        }))
    })?;

    let forecasts = collect_stage_results(results, &jobs, |job| {
        format!("{} by {}", job.cut_id, job.predictor.id())
    })?;
    write_jsonl(&ctx.path("forecasts.jsonl"), &forecasts)?;
    let outcome = StageOutcome {
        records: forecasts.len(),
        provider_calls,
        cache_hits,
    };
    record_stage(ctx, "forecast", "forecasts.jsonl", outcome)?;
    Ok(outcome)
}

/// The scoring conditions for one cut, in stable order. Forecast-bearing
/// conditions appear once per predictor that produced a forecast for it.
fn conditions_for_cut(cut: &AnyCut, forecasts: &[&Forecast]) -> Vec<ScoringCondition> {
    match cut {
        AnyCut::Equation(c) => {
            let mut conds = vec![
                ScoringCondition::empty(),
                ScoringCondition::same_budget(c.budget_b),
                ScoringCondition::triple_budget(c.budget_b),
            ];
            conds.extend(
                forecasts
                    .iter()
                    .map(|f| ScoringCondition::forecast(&f.predictor_id, f.z_truncated.clone())),
            );
            conds.push(ScoringCondition::true_suffix(c.suffix_y.clone()));
            conds
        }
        AnyCut::Prose(_) => {
            let mut conds = vec![ScoringCondition::prose_context()];
            conds.extend(forecasts.iter().map(|f| {
                ScoringCondition::prose_forecast(&f.predictor_id, f.z_truncated.clone())
            }));
            conds
        }
    }
}

/// Score every (cut, condition, scorer) triple in deterministic order.
pub fn run_score(ctx: &RunContext, scorer_specs: &[String]) -> Result<StageOutcome> {
    let cuts: Vec<AnyCut> = read_jsonl(&ctx.path("cuts.jsonl"))?;
    let forecasts: Vec<Forecast> = read_jsonl(&ctx.path("forecasts.jsonl"))?;
    let scorers = ctx.build_scorers(scorer_specs)?;

    let mut forecasts_by_cut: BTreeMap<&str, Vec<&Forecast>> = BTreeMap::new();
    for f in &forecasts {
        forecasts_by_cut.entry(f.cut_id.as_str()).or_default().push(f);
    }

    let mut prompts: Vec<ScoredPrompt> = Vec::new();
    for cut in &cuts {
        let cut_forecasts = forecasts_by_cut
            .get(cut.cut_id())
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        for cond in conditions_for_cut(cut, cut_forecasts) {
            let prompt = match cut {
                AnyCut::Equation(c) => build_scorer_prompt_equation(c, &cond),
                AnyCut::Prose(c) => {
                    build_scorer_prompt_prose(c, &cond, ctx.config.prose.forecast_budget_chars)
                }
            }
            .with_context(|| format!("building `{}` for {}", cond.label, cut.cut_id()))?;
            prompts.push(prompt);
        }
    }

    let mut records: Vec<ScoreRecord> = Vec::with_capacity(prompts.len() * scorers.len());
    let mut provider_calls = 0;
    let mut cache_hits = 0;
    for scorer in &scorers {
        let (results, calls, hits) = ctx.with_gateway(|gateway| {
            Ok(bounded_parallel(&prompts, ctx.config.run.max_in_flight, |sp| {
                gateway.score_target(scorer.as_ref(), sp)
            }))
        })?;
        records.extend(collect_stage_results(results, &prompts, |sp| {
            format!("{} `{}` by {}", sp.cut_id, sp.condition, scorer.id())
        })?);
        provider_calls += calls;
        cache_hits += hits;
    }

    let straddles = records.iter().filter(|r| r.straddle_flag).count();
    if straddles > 0 {
        warn!("{straddles} score records straddle the prompt/target boundary");
    }
    write_jsonl(&ctx.path("scores.jsonl"), &records)?;
    let outcome = StageOutcome {
        records: records.len(),
        provider_calls,
        cache_hits,
    };
    record_stage(ctx, "score", "scores.jsonl", outcome)?;
    Ok(outcome)
}

/// Split per-item results into values or a stage error that names every
/// failed item (each failure was already retried by the gateway).
fn collect_stage_results<T, R>(
    results: Vec<Result<R, GatewayError>>,
    items: &[T],
    describe: impl Fn(&T) -> String,
) -> Result<Vec<R>> {
    let mut out = Vec::with_capacity(results.len());
    let mut failed: Vec<String> = Vec::new();
    for (result, item) in results.into_iter().zip(items) {
        match result {
            Ok(r) => out.push(r),
            Err(e) => {
                error!("{}: {e}", describe(item));
                failed.push(describe(item));
            }
        }
    }
    if !failed.is_empty() {
        let shown = failed.iter().take(5).cloned().collect::<Vec<_>>().join(", ");
        let more = failed.len().saturating_sub(5);
        bail!(
            "{} of {} items failed (rerun resumes from cache): {}{}",
            failed.len(),
            failed.len() + out.len(),
            shown,
            if more > 0 { format!(", +{more} more") } else { String::new() }
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_ids_strip_archive_extensions() {
        assert_eq!(paper_id_from_path(Path::new("corpus/alpha.tex")), "alpha");
        assert_eq!(paper_id_from_path(Path::new("zeta.tar.gz")), "zeta");
        assert_eq!(paper_id_from_path(Path::new("x.tgz")), "x");
        assert_eq!(paper_id_from_path(Path::new("plain")), "plain");
    }

    #[test]
    fn ingest_applies_length_and_keyword_filters() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, body: &str| -> PathBuf {
            let p = dir.path().join(name);
            std::fs::write(&p, body).unwrap();
            p
        };
        let keep = write("keep.tex", &format!("ergodic {}", "x".repeat(100)));
        let short = write("short.tex", "ergodic");
        let offtopic = write("offtopic.tex", &"y".repeat(200));

        let mut config = crate::config::Config::default();
        config.corpus.min_chars = 50;
        config.corpus.keep_keywords = vec!["ergodic".into()];
        let ctx = RunContext::new(config, &dir.path().join("run")).unwrap();

        let outcome = run_ingest(&ctx, &[keep, short, offtopic]).unwrap();
        assert_eq!(outcome.records, 1);
        let papers: Vec<PaperSource> =
            crate::jsonl::read_jsonl(&ctx.path("corpus.jsonl")).unwrap();
        assert_eq!(papers.len(), 1);
        assert_eq!(papers[0].paper_id, "keep");
    }

    #[test]
    fn any_cut_round_trips_with_family_tag() {
        let cut = AnyCut::Prose(ProseCut {
            cut_id: "p:p12000".into(),
            paper_id: "p".into(),
            cut_offset: 12_000,
            target_y: "t".into(),
            context_pred: "c".into(),
            pre2000: "a".into(),
            pre3000: "b".into(),
            has_equation_material: false,
        });
        let line = serde_json::to_string(&cut).unwrap();
        assert!(line.contains("\"family\":\"prose\""));
        let back: AnyCut = serde_json::from_str(&line).unwrap();
        assert_eq!(back, cut);
    }
}
