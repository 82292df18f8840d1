//! Human-readable run summary assembled from finished artifacts.

use super::analyze::window_label;
use super::RunContext;
use crate::manifest::RunManifest;
use crate::metrics::MetricKind;
use anyhow::{Context, Result};
use std::fmt::Write as _;

/// One parsed `aggregates.csv` row.
struct AggRow {
    contrast: String,
    mean: String,
    se: String,
    n_cuts: String,
    n_papers: String,
    frac_positive: String,
    metric: String,
    scorer: String,
    window: String,
}

fn parse_aggregates(text: &str) -> Result<Vec<AggRow>> {
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            anyhow::bail!("malformed aggregates row: {line}");
        }
        rows.push(AggRow {
            contrast: f[0].into(),
            mean: f[1].into(),
            se: f[2].into(),
            n_cuts: f[3].into(),
            n_papers: f[4].into(),
            frac_positive: f[5].into(),
            metric: f[6].into(),
            scorer: f[7].into(),
            window: f[8].into(),
        });
    }
    Ok(rows)
}

/// Render `report.md` from the manifest and the aggregate table.
pub fn run_report(ctx: &RunContext) -> Result<()> {
    let manifest_text = std::fs::read_to_string(ctx.path("manifest.json"))
        .context("no manifest; run the pipeline stages first")?;
    let manifest: RunManifest = serde_json::from_str(&manifest_text)?;
    let aggregates = std::fs::read_to_string(ctx.path("aggregates.csv"))
        .context("no aggregates.csv; run `analyze` first")?;
    let rows = parse_aggregates(&aggregates)?;

    let mut out = String::new();
    let _ = writeln!(out, "# Run {}\n", manifest.run_id);
    let _ = writeln!(out, "- mode: {}", manifest.mode);
    let _ = writeln!(out, "- seed: {}", manifest.seed);
    let _ = writeln!(out, "- config digest: {}\n", manifest.config_digest);

    let _ = writeln!(out, "## Stages\n");
    let _ = writeln!(out, "| stage | artifact | records | provider calls | cache hits |");
    let _ = writeln!(out, "|---|---|---:|---:|---:|");
    for (stage, info) in &manifest.stages {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            stage, info.artifact, info.records, info.provider_calls, info.cache_hits
        );
    }

    let headline = MetricKind::headline().to_string();
    let full = window_label(None);
    let _ = writeln!(
        out,
        "\n## Lift contrasts ({headline}, full target)\n\n\
         Positive mean: the left condition's prompt raised the scorer's\n\
         log-likelihood of the true continuation over the right condition's.\n"
    );
    let _ = writeln!(out, "| contrast | scorer | mean | se | cuts | papers | frac > 0 |");
    let _ = writeln!(out, "|---|---|---:|---:|---:|---:|---:|");
    for row in rows.iter().filter(|r| r.metric == headline && r.window == full) {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            row.contrast, row.scorer, row.mean, row.se, row.n_cuts, row.n_papers, row.frac_positive
        );
    }

    std::fs::write(ctx.path("report.md"), out)?;
    Ok(())
}
