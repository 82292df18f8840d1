//! Command-line orchestration: one subcommand per pipeline stage.
//!
//! Stages communicate only through files in a run directory, so any stage
//! can be rerun in isolation and a finished run can be audited file by file:
//!
//! ```text
//! <run-dir>/corpus.jsonl      flattened papers          (ingest)
//! <run-dir>/cuts.jsonl        prediction tasks          (cut)
//! <run-dir>/rejections.jsonl  extraction report         (cut)
//! <run-dir>/forecasts.jsonl   predictor outputs         (forecast)
//! <run-dir>/scores.jsonl      per-token log-likelihoods (score)
//! <run-dir>/aggregates.csv    contrast summaries        (analyze)
//! <run-dir>/ecdf.csv          per-cut lift distribution (analyze)
//! <run-dir>/probe_report.md   tiny scaffold probe       (probe-toy)
//! <run-dir>/report.md         human-readable summary    (report)
//! <run-dir>/cache.jsonl       provider call cache
//! <run-dir>/manifest.json     stage digests and spend counters
//! ```

pub mod analyze;
pub mod pipeline;
pub mod probe;
pub mod report;

use crate::config::{Config, Mode, ProviderKind};
use crate::gateway::http::{HttpPredictor, HttpScorer};
use crate::gateway::mock::{builtin_scorer, EmptyPredictor, NoisePredictor, OraclePredictor};
use crate::gateway::{
    cache::CallCache, Gateway, Predictor, PredictorSetting, ReasoningEffort, RetryPolicy, Scorer,
    ScoredToken, GatewayError,
};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "texlift",
    version,
    about = "Hidden-continuation benchmark pipeline for technical TeX papers"
)]
pub struct Cli {
    /// Run configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory holding this run's artifacts.
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,

    /// Override the configured run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the configured cut family (equation|prose).
    #[arg(long, global = true)]
    mode: Option<Mode>,

    /// Hard cap on non-cached provider calls for this invocation.
    #[arg(long, global = true)]
    max_spend: Option<u64>,

    /// Use the deterministic offline mocks; refuse network adapters.
    #[arg(long, global = true)]
    offline: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decode TeX sources or archives into a flattened corpus file.
    Ingest {
        /// Paper files: bare .tex, gzipped tar, or gzipped single file.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Slice the corpus into hidden-continuation cuts.
    Cut,
    /// Generate one forecast per (cut, predictor).
    Forecast {
        /// Predictor to run, as `id` or `id:effort`; repeatable.
        /// Defaults to the configured predictors (offline: the mocks).
        #[arg(long = "predictor")]
        predictors: Vec<String>,
    },
    /// Score every (cut, condition) pair with each scorer.
    Score {
        /// Scorer id from config; repeatable. Offline default: built-in mock.
        #[arg(long = "scorer")]
        scorers: Vec<String>,
    },
    /// Aggregate scores into paper-clustered lift contrasts.
    Analyze {
        /// Metric name (e.g. clip_ll_2); repeatable. Default: full suite.
        #[arg(long = "metric")]
        metrics: Vec<String>,
        /// Target-token window; repeatable. Default: full plus 50/100/200/400.
        #[arg(long = "window")]
        windows: Vec<usize>,
    },
    /// Score the tiny equivalent-continuation probe and write its report.
    ProbeToy {
        /// Scorer id from config. Offline default: built-in mock.
        #[arg(long)]
        scorer: Option<String>,
    },
    /// Render a human-readable summary of a finished run.
    Report,
}

/// Everything a stage needs: resolved config plus the artifact directory.
pub struct RunContext {
    pub config: Config,
    pub run_dir: PathBuf,
}

impl RunContext {
    /// Create the context (and the run directory) from an already-resolved
    /// config. CLI flag overrides must be applied to `config` beforehand so
    /// the manifest's config digest reflects what actually ran.
    pub fn new(config: Config, run_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(run_dir)
            .with_context(|| format!("creating run directory {}", run_dir.display()))?;
        Ok(Self {
            config,
            run_dir: run_dir.to_path_buf(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.config.run.seed
    }

    pub fn mode(&self) -> Mode {
        self.config.run.mode
    }

    pub fn offline(&self) -> bool {
        self.config.run.offline
    }

    pub fn path(&self, artifact: &str) -> PathBuf {
        self.run_dir.join(artifact)
    }

    pub fn open_cache(&self) -> Result<CallCache> {
        CallCache::open(&self.path("cache.jsonl")).map_err(anyhow::Error::from)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.config.gateway.retry_max_attempts,
            base_delay_ms: self.config.gateway.retry_base_delay_ms,
        }
    }

    /// Resolve predictor specs (`id` or `id:effort`) into live instances.
    /// Empty specs fall back to the configured predictors, or to the three
    /// mocks when offline or nothing is configured.
    pub fn build_predictors(&self, specs: &[String]) -> Result<Vec<Box<dyn Predictor>>> {
        let specs: Vec<String> = if !specs.is_empty() {
            specs.to_vec()
        } else if self.offline() || self.config.predictors.is_empty() {
            ["mock-oracle", "mock-noise", "mock-empty"]
                .map(String::from)
                .to_vec()
        } else {
            self.config.predictors.keys().cloned().collect()
        };
        specs.iter().map(|s| self.build_predictor(s)).collect()
    }

    fn build_predictor(&self, spec: &str) -> Result<Box<dyn Predictor>> {
        let (id, effort) = match spec.split_once(':') {
            Some((id, effort)) => {
                let effort: ReasoningEffort = effort
                    .parse()
                    .map_err(|e: String| anyhow::anyhow!(e))
                    .with_context(|| format!("predictor spec `{spec}`"))?;
                (id, Some(effort))
            }
            None => (spec, None),
        };
        match id {
            "mock-oracle" => Ok(Box::new(OraclePredictor)),
            "mock-noise" => Ok(Box::new(NoisePredictor { seed: self.seed() })),
            "mock-empty" => Ok(Box::new(EmptyPredictor)),
            _ => {
                if self.offline() {
                    bail!("offline run cannot use network predictor `{id}`");
                }
                let entry = self
                    .config
                    .predictors
                    .get(id)
                    .with_context(|| format!("predictor `{id}` is not configured"))?;
                let provider = self
                    .config
                    .providers
                    .get(&entry.provider)
                    .with_context(|| format!("provider `{}` is not configured", entry.provider))?;
                let setting = PredictorSetting {
                    provider_id: entry.provider.clone(),
                    model_id: entry.model.clone(),
                    reasoning_effort: effort.unwrap_or(entry.reasoning_effort),
                    temperature: entry.temperature,
                    max_forecast_chars: entry.max_forecast_chars,
                };
                Ok(Box::new(HttpPredictor::new(id, &entry.provider, provider, setting)?))
            }
        }
    }

    /// Resolve scorer specs into live instances; empty specs fall back to
    /// the configured scorers, or the built-in mock when offline or none.
    pub fn build_scorers(&self, specs: &[String]) -> Result<Vec<Box<dyn Scorer>>> {
        let specs: Vec<String> = if !specs.is_empty() {
            specs.to_vec()
        } else if self.offline() || self.config.scorers.is_empty() {
            vec!["mock-ngram".into()]
        } else {
            self.config.scorers.keys().cloned().collect()
        };
        specs.iter().map(|s| self.build_scorer(s)).collect()
    }

    fn build_scorer(&self, id: &str) -> Result<Box<dyn Scorer>> {
        if id == "mock-ngram" {
            return Ok(Box::new(SharedScorer(builtin_scorer())));
        }
        if self.offline() {
            bail!("offline run cannot use network scorer `{id}`");
        }
        let entry = self
            .config
            .scorers
            .get(id)
            .with_context(|| format!("scorer `{id}` is not configured"))?;
        let provider = self
            .config
            .providers
            .get(&entry.provider)
            .with_context(|| format!("provider `{}` is not configured", entry.provider))?;
        if provider.kind != ProviderKind::FireworksCompletions {
            bail!("scorer `{id}` needs a completions-style provider");
        }
        Ok(Box::new(HttpScorer::new(id, &entry.provider, provider, &entry.model)?))
    }

    /// Run `f` with a gateway wired to this run's cache and spend settings,
    /// returning `f`'s value plus (provider calls, cache hits).
    pub fn with_gateway<R>(
        &self,
        f: impl FnOnce(&Gateway) -> Result<R>,
    ) -> Result<(R, u64, u64)> {
        let cache = self.open_cache()?;
        let spend = crate::gateway::SpendMeter::new(self.config.run.max_spend);
        let gateway = Gateway {
            cache: &cache,
            spend: &spend,
            retry: self.retry_policy(),
        };
        let value = f(&gateway)?;
        Ok((value, spend.calls_made(), spend.cache_hits()))
    }
}

/// Borrowing adapter so the process-wide mock scorer can sit in an owned
/// scorer list next to network scorers.
struct SharedScorer(&'static dyn Scorer);

impl Scorer for SharedScorer {
    fn id(&self) -> &str {
        self.0.id()
    }
    fn score_text(&self, text: &str) -> Result<Vec<ScoredToken>, GatewayError> {
        self.0.score_text(text)
    }
}

/// Parse arguments, resolve config, and dispatch one subcommand.
pub fn run() -> Result<()> {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(mode) = cli.mode {
        config.run.mode = mode;
    }
    if let Some(cap) = cli.max_spend {
        config.run.max_spend = Some(cap);
    }
    if cli.offline {
        config.run.offline = true;
    }
    let ctx = RunContext::new(config, &cli.run_dir)?;

    match &cli.command {
        Command::Ingest { paths } => {
            let outcome = pipeline::run_ingest(&ctx, paths)?;
            println!("ingested {} papers -> {}", outcome.records, ctx.path("corpus.jsonl").display());
        }
        Command::Cut => {
            let outcome = pipeline::run_cut(&ctx)?;
            println!("extracted {} cuts -> {}", outcome.records, ctx.path("cuts.jsonl").display());
        }
        Command::Forecast { predictors } => {
            let outcome = pipeline::run_forecast(&ctx, predictors)?;
            println!(
                "wrote {} forecasts ({} provider calls, {} cache hits)",
                outcome.records, outcome.provider_calls, outcome.cache_hits
            );
        }
        Command::Score { scorers } => {
            let outcome = pipeline::run_score(&ctx, scorers)?;
            println!(
                "wrote {} score records ({} provider calls, {} cache hits)",
                outcome.records, outcome.provider_calls, outcome.cache_hits
            );
        }
        Command::Analyze { metrics, windows } => {
            let outcome = analyze::run_analyze(&ctx, metrics, windows)?;
            println!("wrote {} aggregate rows -> {}", outcome.records, ctx.path("aggregates.csv").display());
        }
        Command::ProbeToy { scorer } => {
            let outcome = probe::run_probe(&ctx, scorer.as_deref())?;
            println!("wrote {} probe rows -> {}", outcome.records, ctx.path("probe_report.md").display());
        }
        Command::Report => {
            report::run_report(&ctx)?;
            println!("wrote {}", ctx.path("report.md").display());
        }
    }
    Ok(())
}
