//! Per-token scoring rules and likelihood lift.
//!
//! A scorer reports one natural-log likelihood per target token. This module
//! reduces those per-token values to a single score per (cut, condition) and
//! forms lifts as differences between a condition and its control.
//!
//! The headline metric is `clip_ll_2`: the mean of `max(lambda, -2)` over
//! target tokens. Clipping bounds the damage a single mispredicted token can
//! do to the mean while leaving the well-predicted region untouched, so a
//! forecast that nails most of a continuation is not erased by one
//! catastrophic token.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    /// The target contributed no scored tokens.
    #[error("target has no scored tokens")]
    EmptyTarget,
    /// Lift operands were computed under different settings.
    #[error("lift operands disagree on {0}")]
    MetricMismatch(String),
    /// A metric name did not parse.
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

/// Per-token log-likelihoods for one scored target, natural log.
///
/// Every value is a log-probability and therefore at most zero; zero itself
/// is legal (a provider may report an exactly-certain token).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogLikelihoods(pub Vec<f64>);

impl TokenLogLikelihoods {
    pub fn token_count(&self) -> usize {
        self.0.len()
    }
}

/// A per-token transform whose mean over the target is the score.
///
/// All variants are softenings of the raw log-likelihood: they agree near
/// zero and differ in how hard they punish very unlikely tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MetricKind {
    /// The identity: mean per-token log-likelihood.
    RawLl,
    /// `max(lambda, -k)`: per-token log-likelihood clipped below at `-k`.
    ClipLl(f64),
    /// `-sqrt(-lambda)`: square-root softening.
    SqrtLoss,
    /// `-ln(1 - lambda)`: logarithmic softening.
    LogOnePlus,
}

impl MetricKind {
    /// The default metric suite reported by the analysis stage.
    pub fn standard_suite() -> Vec<MetricKind> {
        vec![
            MetricKind::RawLl,
            MetricKind::ClipLl(2.0),
            MetricKind::ClipLl(3.0),
            MetricKind::ClipLl(5.0),
            MetricKind::SqrtLoss,
            MetricKind::LogOnePlus,
        ]
    }

    /// The headline metric.
    pub fn headline() -> MetricKind {
        MetricKind::ClipLl(2.0)
    }

    fn transform(&self, lambda: f64) -> f64 {
        match self {
            MetricKind::RawLl => lambda,
            MetricKind::ClipLl(k) => lambda.max(-k),
            MetricKind::SqrtLoss => -(-lambda).sqrt(),
            MetricKind::LogOnePlus => -(1.0 - lambda).ln(),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::RawLl => write!(f, "raw_ll"),
            MetricKind::ClipLl(k) => {
                if k.fract() == 0.0 {
                    write!(f, "clip_ll_{}", *k as i64)
                } else {
                    write!(f, "clip_ll_{k}")
                }
            }
            MetricKind::SqrtLoss => write!(f, "sqrt_loss"),
            MetricKind::LogOnePlus => write!(f, "log_one_plus"),
        }
    }
}

impl FromStr for MetricKind {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw_ll" => Ok(MetricKind::RawLl),
            "sqrt_loss" => Ok(MetricKind::SqrtLoss),
            "log_one_plus" => Ok(MetricKind::LogOnePlus),
            _ => {
                if let Some(rest) = s.strip_prefix("clip_ll_") {
                    let k: f64 = rest
                        .parse()
                        .map_err(|_| MetricError::UnknownMetric(s.to_string()))?;
                    if k > 0.0 && k.is_finite() {
                        return Ok(MetricKind::ClipLl(k));
                    }
                }
                Err(MetricError::UnknownMetric(s.to_string()))
            }
        }
    }
}

impl From<MetricKind> for String {
    fn from(m: MetricKind) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for MetricKind {
    type Error = MetricError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Mean of the metric transform over all target tokens.
pub fn score(lams: &TokenLogLikelihoods, kind: MetricKind) -> Result<f64, MetricError> {
    if lams.0.is_empty() {
        return Err(MetricError::EmptyTarget);
    }
    let sum: f64 = lams.0.iter().map(|&l| kind.transform(l)).sum();
    Ok(sum / lams.0.len() as f64)
}

/// Mean of the metric transform over the first `min(n, T)` target tokens.
///
/// When the target has at most `n` tokens this equals the full score, so
/// windowed and unwindowed runs agree on short targets by construction.
pub fn window_score(
    lams: &TokenLogLikelihoods,
    n: usize,
    kind: MetricKind,
) -> Result<f64, MetricError> {
    if n == 0 || lams.0.is_empty() {
        return Err(MetricError::EmptyTarget);
    }
    let take = n.min(lams.0.len());
    let sum: f64 = lams.0[..take].iter().map(|&l| kind.transform(l)).sum();
    Ok(sum / take as f64)
}

/// A computed score together with everything a lift must hold fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub cut_id: String,
    pub condition: String,
    pub scorer_id: String,
    pub metric: MetricKind,
    /// `None` scores the whole target; `Some(n)` scores the first n tokens.
    pub window: Option<usize>,
    pub value: f64,
}

/// Likelihood lift: condition score minus control score.
///
/// Both operands must come from the same cut, scorer, metric, and window;
/// only the condition may differ. Positive lift means the condition's prompt
/// raised the scorer's log-likelihood of the true continuation.
pub fn lift(condition: &MetricValue, control: &MetricValue) -> Result<f64, MetricError> {
    for (field, a, b) in [
        ("cut_id", &condition.cut_id, &control.cut_id),
        ("scorer_id", &condition.scorer_id, &control.scorer_id),
    ] {
        if a != b {
            return Err(MetricError::MetricMismatch(format!(
                "{field}: `{a}` vs `{b}`"
            )));
        }
    }
    if condition.metric != control.metric {
        return Err(MetricError::MetricMismatch(format!(
            "metric: `{}` vs `{}`",
            condition.metric, control.metric
        )));
    }
    if condition.window != control.window {
        return Err(MetricError::MetricMismatch(format!(
            "window: {:?} vs {:?}",
            condition.window, control.window
        )));
    }
    Ok(condition.value - control.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lams(v: &[f64]) -> TokenLogLikelihoods {
        TokenLogLikelihoods(v.to_vec())
    }

    #[test]
    fn clipped_mean_is_exact_on_small_vector() {
        // (-0.5 + max(-3, -2) + -1) / 3 = -3.5 / 3 = -7/6, exactly in f64.
        let s = score(&lams(&[-0.5, -3.0, -1.0]), MetricKind::ClipLl(2.0)).unwrap();
        assert_eq!(s, -7.0 / 6.0);
    }

    #[test]
    fn raw_equals_clip_when_nothing_clips() {
        let v = lams(&[-0.008, -0.008, -0.008]);
        let raw = score(&v, MetricKind::RawLl).unwrap();
        let clip = score(&v, MetricKind::ClipLl(2.0)).unwrap();
        assert!((raw - clip).abs() < 1e-15);
        assert!((raw - (-0.008)).abs() < 1e-12);
    }

    #[test]
    fn empty_target_is_rejected() {
        assert_eq!(
            score(&lams(&[]), MetricKind::RawLl),
            Err(MetricError::EmptyTarget)
        );
        assert_eq!(
            window_score(&lams(&[-1.0]), 0, MetricKind::RawLl),
            Err(MetricError::EmptyTarget)
        );
    }

    #[test]
    fn one_catastrophic_token_barely_moves_the_clipped_mean() {
        let mut v = vec![-0.1; 100];
        let base_raw = score(&lams(&v), MetricKind::RawLl).unwrap();
        let base_clip = score(&lams(&v), MetricKind::ClipLl(2.0)).unwrap();
        v[37] = -30.0;
        let hit_raw = score(&lams(&v), MetricKind::RawLl).unwrap();
        let hit_clip = score(&lams(&v), MetricKind::ClipLl(2.0)).unwrap();
        assert!((base_raw - hit_raw).abs() >= 0.29);
        assert!((base_clip - hit_clip).abs() <= 0.02);
    }

    #[test]
    fn softening_chain_on_a_fixed_vector() {
        let v = lams(&[-0.01, -7.3, -2.5, 0.0, -4.0]);
        let raw = score(&v, MetricKind::RawLl).unwrap();
        let c5 = score(&v, MetricKind::ClipLl(5.0)).unwrap();
        let c3 = score(&v, MetricKind::ClipLl(3.0)).unwrap();
        let c2 = score(&v, MetricKind::ClipLl(2.0)).unwrap();
        assert!(raw <= c5 && c5 <= c3 && c3 <= c2 && c2 <= 0.0);
    }

    #[test]
    fn log_one_plus_and_sqrt_are_nonpositive_and_zero_at_zero() {
        for kind in [MetricKind::SqrtLoss, MetricKind::LogOnePlus] {
            assert_eq!(score(&lams(&[0.0, 0.0]), kind).unwrap(), 0.0);
            assert!(score(&lams(&[-0.5, -9.0]), kind).unwrap() < 0.0);
        }
    }

    #[test]
    fn window_score_saturates_at_target_length() {
        let v = lams(&[-0.2, -0.4, -0.6]);
        let full = score(&v, MetricKind::ClipLl(2.0)).unwrap();
        assert_eq!(window_score(&v, 3, MetricKind::ClipLl(2.0)).unwrap(), full);
        assert_eq!(window_score(&v, 50, MetricKind::ClipLl(2.0)).unwrap(), full);
        let first_two = window_score(&v, 2, MetricKind::ClipLl(2.0)).unwrap();
        assert!((first_two - (-0.3)).abs() < 1e-15);
    }

    #[test]
    fn lift_subtracts_control_and_checks_settings() {
        let mk = |condition: &str, value: f64| MetricValue {
            cut_id: "p:e1".into(),
            condition: condition.into(),
            scorer_id: "s".into(),
            metric: MetricKind::ClipLl(2.0),
            window: None,
            value,
        };
        // Scores in the ballpark of a strong forecast vs an empty scaffold.
        let exact = mk("forecast", -0.008);
        let empty = mk("empty", -1.543);
        let got = lift(&exact, &empty).unwrap();
        assert!((got - 1.535).abs() < 1e-12);

        let mut other_scorer = empty.clone();
        other_scorer.scorer_id = "t".into();
        assert!(matches!(
            lift(&exact, &other_scorer),
            Err(MetricError::MetricMismatch(_))
        ));

        let mut other_window = empty.clone();
        other_window.window = Some(100);
        assert!(matches!(
            lift(&exact, &other_window),
            Err(MetricError::MetricMismatch(_))
        ));

        let mut other_metric = empty;
        other_metric.metric = MetricKind::RawLl;
        assert!(matches!(
            lift(&exact, &other_metric),
            Err(MetricError::MetricMismatch(_))
        ));
    }

    #[test]
    fn metric_names_round_trip() {
        for kind in MetricKind::standard_suite() {
            let name = kind.to_string();
            assert_eq!(name.parse::<MetricKind>().unwrap(), kind);
        }
        assert_eq!("clip_ll_2".parse::<MetricKind>().unwrap(), MetricKind::ClipLl(2.0));
        assert!("clip_ll_-1".parse::<MetricKind>().is_err());
        assert!("nats".parse::<MetricKind>().is_err());
    }

    proptest! {
        /// Softer metrics never score lower: raw <= clip5 <= clip3 <= clip2 <= 0.
        #[test]
        fn softening_chain_holds(v in proptest::collection::vec(-40.0f64..=0.0, 1..64)) {
            let v = lams(&v);
            let raw = score(&v, MetricKind::RawLl).unwrap();
            let c5 = score(&v, MetricKind::ClipLl(5.0)).unwrap();
            let c3 = score(&v, MetricKind::ClipLl(3.0)).unwrap();
            let c2 = score(&v, MetricKind::ClipLl(2.0)).unwrap();
            prop_assert!(raw <= c5);
            prop_assert!(c5 <= c3);
            prop_assert!(c3 <= c2);
            prop_assert!(c2 <= 1e-12);
        }

        /// Scores are means, so token order never matters.
        #[test]
        fn scores_are_permutation_invariant(
            v in proptest::collection::vec(-40.0f64..=0.0, 1..32),
            rot in 0usize..32,
        ) {
            let mut w = v.clone();
            w.rotate_left(rot % v.len().max(1));
            for kind in MetricKind::standard_suite() {
                let a = score(&lams(&v), kind).unwrap();
                let b = score(&lams(&w), kind).unwrap();
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
