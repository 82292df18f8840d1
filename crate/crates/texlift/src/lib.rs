//! Hidden-continuation benchmark pipeline for technical TeX papers.
//!
//! The pipeline turns raw TeX sources into prediction tasks and measures how
//! much a forecast string written by one model (the predictor) raises the
//! log-likelihood a frozen second model (the scorer) assigns to the true
//! hidden continuation, relative to budget-matched controls.
//!
//! Stages, each with its own module and CLI subcommand:
//!
//! 1. [`corpus`] — decode source archives into flat character streams.
//! 2. [`cut`] — slice papers into equation-suffix and prose continuation
//!    tasks with stable character offsets.
//! 3. [`scaffold`] — build predictor prompts, scorer scaffolds, and
//!    budget-matched control prompts, bit-exactly.
//! 4. [`gateway`] — drive predictor/scorer endpoints with caching, bounded
//!    parallelism, and deterministic offline mocks.
//! 5. [`metrics`] — reduce per-token log-likelihoods to softened scores and
//!    lifts.
//! 6. [`analysis`] — aggregate lifts with paper-clustered standard errors.
//! 7. [`cli`] — orchestrate runs and emit tables and reports.
//!
//! All offsets, lengths, and budgets count Unicode scalar values, never
//! bytes or tokens, unless a name says otherwise.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod cut;
pub mod digest;
pub mod gateway;
pub mod jsonl;
pub mod manifest;
pub mod metrics;
pub mod scaffold;
pub mod textutil;
