//! Aggregation of per-cut lifts into paper-clustered summary statistics.
//!
//! Cuts from one paper share context, notation, and authorship, so their
//! lifts are correlated and plain i.i.d. standard errors would overstate
//! precision. Everything here clusters by paper: the unit of independence is
//! the paper, the unit of observation is the cut.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    /// Clustered statistics need at least two papers.
    #[error("need at least two clusters, got {0}")]
    TooFewClusters(usize),
    /// A paired contrast was given two different cut sets.
    #[error("paired contrast sides disagree on cut ids: {0}")]
    CutSetMismatch(String),
    /// Significance is undefined when the standard error is zero.
    #[error("standard error is zero")]
    ZeroSe,
}

/// One side of a contrast: a per-cut scalar tagged with its paper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerCutValue {
    pub cut_id: String,
    pub paper_id: String,
    pub value: f64,
}

/// A summarized contrast between two scoring conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftAggregate {
    pub contrast_id: String,
    pub mean: f64,
    pub clustered_se: f64,
    pub n_cuts: usize,
    pub n_papers: usize,
    /// Fraction of per-cut differences strictly greater than zero.
    pub frac_positive: f64,
}

/// Mean and paper-clustered standard error of `values`.
///
/// With cluster sums `S_c`, cluster sizes `n_c`, total count `n` and `C`
/// clusters, the variance estimate is
///
/// ```text
/// se^2 = C/(C-1) * sum_c (S_c - n_c * mean)^2 / n^2
/// ```
///
/// which collapses to the usual `s^2/n` shape when every cluster has one
/// observation, and is robust to arbitrary within-cluster correlation.
pub fn clustered_mean_se(values: &[(String, f64)]) -> Result<(f64, f64), AnalysisError> {
    let mut clusters: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (paper, v) in values {
        let e = clusters.entry(paper).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let c = clusters.len();
    if c < 2 {
        return Err(AnalysisError::TooFewClusters(c));
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|(_, v)| v).sum::<f64>() / n;
    let ss: f64 = clusters
        .values()
        .map(|&(sum, size)| {
            let d = sum - size as f64 * mean;
            d * d
        })
        .sum();
    let se2 = c as f64 / (c as f64 - 1.0) * ss / (n * n);
    Ok((mean, se2.sqrt()))
}

/// Paired contrast between two conditions scored on the same cuts.
///
/// Differences are formed per cut (`lhs - rhs`) and then summarized with a
/// clustered mean and standard error. Both sides must cover exactly the same
/// cut ids; pairing by cut removes between-cut variance from the comparison.
pub fn paired_contrast(
    contrast_id: &str,
    lhs: &[PerCutValue],
    rhs: &[PerCutValue],
) -> Result<LiftAggregate, AnalysisError> {
    let lhs_ids: BTreeSet<&str> = lhs.iter().map(|v| v.cut_id.as_str()).collect();
    let rhs_ids: BTreeSet<&str> = rhs.iter().map(|v| v.cut_id.as_str()).collect();
    if lhs_ids != rhs_ids || lhs_ids.len() != lhs.len() || rhs_ids.len() != rhs.len() {
        let only_l: Vec<&str> = lhs_ids.difference(&rhs_ids).copied().collect();
        let only_r: Vec<&str> = rhs_ids.difference(&lhs_ids).copied().collect();
        return Err(AnalysisError::CutSetMismatch(format!(
            "only-lhs {only_l:?}, only-rhs {only_r:?}"
        )));
    }
    let rhs_by_id: BTreeMap<&str, &PerCutValue> =
        rhs.iter().map(|v| (v.cut_id.as_str(), v)).collect();
    let mut diffs: Vec<(String, f64)> = Vec::with_capacity(lhs.len());
    let mut positive = 0usize;
    // Iterate in cut-id order so float summation order is deterministic.
    let mut lhs_sorted: Vec<&PerCutValue> = lhs.iter().collect();
    lhs_sorted.sort_by(|a, b| a.cut_id.cmp(&b.cut_id));
    for l in lhs_sorted {
        let r = rhs_by_id[l.cut_id.as_str()];
        let d = l.value - r.value;
        if d > 0.0 {
            positive += 1;
        }
        diffs.push((l.paper_id.clone(), d));
    }
    let (mean, se) = clustered_mean_se(&diffs)?;
    let papers: BTreeSet<&str> = diffs.iter().map(|(p, _)| p.as_str()).collect();
    Ok(LiftAggregate {
        contrast_id: contrast_id.to_string(),
        mean,
        clustered_se: se,
        n_cuts: diffs.len(),
        n_papers: papers.len(),
        frac_positive: positive as f64 / diffs.len() as f64,
    })
}

/// Two-sided z-test at level `alpha`: is `|mean| / se` beyond the normal
/// quantile `z(1 - alpha/2)`?
pub fn significance_flag(agg: &LiftAggregate, alpha: f64) -> Result<bool, AnalysisError> {
    if agg.clustered_se == 0.0 {
        return Err(AnalysisError::ZeroSe);
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z = normal.inverse_cdf(1.0 - alpha / 2.0);
    Ok((agg.mean / agg.clustered_se).abs() > z)
}

/// Right-continuous empirical CDF: for each distinct value `x`, the fraction
/// of observations `<= x`. Returned in ascending `x` order.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => out.push((x, f)),
        }
    }
    out
}

/// Lower median: the element at index `(n-1)/2` of the sorted values.
///
/// Always an observed value, so medians of integer-valued lifts stay
/// integers. Panics on an empty slice.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

/// Cut ids of the `floor(q * n)` cuts with the smallest baseline values,
/// ties broken by cut id. Returned sorted by cut id.
///
/// Used for "hardest cuts" subsets: rank cuts by how badly a baseline
/// condition scores them, then restrict a contrast to the bottom quantile.
pub fn subset_by_baseline_quantile(baseline: &[(String, f64)], q: f64) -> Vec<String> {
    assert!((0.0..=1.0).contains(&q), "quantile must be in [0, 1]");
    let take = (q * baseline.len() as f64).floor() as usize;
    let mut ranked: Vec<&(String, f64)> = baseline.iter().collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut ids: Vec<String> = ranked[..take.min(ranked.len())]
        .iter()
        .map(|(id, _)| id.clone())
        .collect();
    ids.sort();
    ids
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vals(rows: &[(&str, f64)]) -> Vec<(String, f64)> {
        rows.iter().map(|(p, v)| (p.to_string(), *v)).collect()
    }

    fn side(rows: &[(&str, &str, f64)]) -> Vec<PerCutValue> {
        rows.iter()
            .map(|(c, p, v)| PerCutValue {
                cut_id: c.to_string(),
                paper_id: p.to_string(),
                value: *v,
            })
            .collect()
    }

    #[test]
    fn clustered_se_on_two_homogeneous_clusters() {
        // Two papers, two cuts each, values +1 in one paper and -1 in the
        // other. mean = 0, cluster sums are +2 and -2, so
        // se^2 = 2 * (4 + 4) / 16 = 1 and se = 1.
        let v = vals(&[("a", 1.0), ("a", 1.0), ("b", -1.0), ("b", -1.0)]);
        let (mean, se) = clustered_mean_se(&v).unwrap();
        assert_eq!(mean, 0.0);
        assert!((se - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_is_rejected() {
        let v = vals(&[("a", 1.0), ("a", 2.0)]);
        assert_eq!(
            clustered_mean_se(&v),
            Err(AnalysisError::TooFewClusters(1))
        );
    }

    #[test]
    fn clustering_widens_se_under_within_paper_correlation() {
        // Same 8 values either spread over 8 papers (independent) or
        // concentrated in 2 papers (perfectly correlated within paper).
        let spread = vals(&[
            ("p1", 1.0),
            ("p2", 1.0),
            ("p3", 1.0),
            ("p4", 1.0),
            ("p5", -1.0),
            ("p6", -1.0),
            ("p7", -1.0),
            ("p8", -1.0),
        ]);
        let packed = vals(&[
            ("p1", 1.0),
            ("p1", 1.0),
            ("p1", 1.0),
            ("p1", 1.0),
            ("p2", -1.0),
            ("p2", -1.0),
            ("p2", -1.0),
            ("p2", -1.0),
        ]);
        let (_, se_spread) = clustered_mean_se(&spread).unwrap();
        let (_, se_packed) = clustered_mean_se(&packed).unwrap();
        assert!(se_packed > se_spread);
    }

    #[test]
    fn paired_contrast_is_antisymmetric() {
        let lhs = side(&[
            ("a:e1", "a", -0.2),
            ("a:e2", "a", -0.4),
            ("b:e1", "b", -0.1),
            ("b:e2", "b", -0.15),
        ]);
        let rhs = side(&[
            ("a:e1", "a", -0.5),
            ("a:e2", "a", -0.3),
            ("b:e1", "b", -0.4),
            ("b:e2", "b", -0.2),
        ]);
        let fwd = paired_contrast("f", &lhs, &rhs).unwrap();
        let rev = paired_contrast("r", &rhs, &lhs).unwrap();
        assert_eq!(fwd.mean, -rev.mean);
        assert_eq!(fwd.clustered_se, rev.clustered_se);
        assert_eq!(fwd.n_cuts, 4);
        assert_eq!(fwd.n_papers, 2);
        // Three of four differences are positive in the forward direction.
        assert_eq!(fwd.frac_positive, 0.75);
        assert_eq!(rev.frac_positive, 0.25);
    }

    #[test]
    fn paired_contrast_rejects_mismatched_cut_sets() {
        let lhs = side(&[("a:e1", "a", 0.1), ("b:e1", "b", 0.2)]);
        let rhs = side(&[("a:e1", "a", 0.0), ("b:e2", "b", 0.0)]);
        assert!(matches!(
            paired_contrast("x", &lhs, &rhs),
            Err(AnalysisError::CutSetMismatch(_))
        ));
    }

    #[test]
    fn significance_uses_two_sided_normal_quantile() {
        let agg = |mean: f64, se: f64| LiftAggregate {
            contrast_id: "c".into(),
            mean,
            clustered_se: se,
            n_cuts: 10,
            n_papers: 5,
            frac_positive: 0.5,
        };
        // z(0.975) ~ 1.96: a 2-sigma effect passes at alpha = 0.05 ...
        assert!(significance_flag(&agg(0.2, 0.1), 0.05).unwrap());
        // ... and a 1.5-sigma effect does not.
        assert!(!significance_flag(&agg(0.15, 0.1), 0.05).unwrap());
        // Negative effects are two-sided.
        assert!(significance_flag(&agg(-0.2, 0.1), 0.05).unwrap());
        // alpha = 1 makes the threshold z(0.5) = 0, so any nonzero mean passes.
        assert!(significance_flag(&agg(1e-9, 0.1), 1.0).unwrap());
        assert_eq!(
            significance_flag(&agg(0.2, 0.0), 0.05),
            Err(AnalysisError::ZeroSe)
        );
    }

    #[test]
    fn ecdf_is_right_continuous_with_duplicates_merged() {
        let e = ecdf(&[1.0, 1.0, 2.0, 5.0]);
        assert_eq!(e, vec![(1.0, 0.5), (2.0, 0.75), (5.0, 1.0)]);
    }

    #[test]
    fn median_is_lower_median() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.0);
        assert_eq!(median(&[7.5]), 7.5);
    }

    #[test]
    fn quantile_subset_takes_floor_and_breaks_ties_by_id() {
        let baseline = vals(&[("d", -1.0), ("b", -3.0), ("a", -3.0), ("c", -2.0)])
            .into_iter()
            .zip(["d", "b", "a", "c"])
            .map(|((_, v), id)| (id.to_string(), v))
            .collect::<Vec<_>>();
        // floor(0.5 * 4) = 2 smallest: both -3.0 values, tie broken by id.
        assert_eq!(
            subset_by_baseline_quantile(&baseline, 0.5),
            vec!["a".to_string(), "b".to_string()]
        );
        assert_eq!(subset_by_baseline_quantile(&baseline, 0.0), Vec::<String>::new());
        assert_eq!(subset_by_baseline_quantile(&baseline, 1.0).len(), 4);
        // floor(0.7 * 4) = 2 as well.
        assert_eq!(subset_by_baseline_quantile(&baseline, 0.7).len(), 2);
    }
}
