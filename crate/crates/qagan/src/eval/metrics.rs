//! Answer normalization and the EM / token-F1 metrics.

use crate::error::{Error, Result};
use crate::numerics::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercase, strip punctuation, drop articles, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let depunct: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { '\0' })
        .filter(|&c| c != '\0')
        .collect();
    depunct
        .split_whitespace()
        .filter(|tok| !ARTICLES.contains(tok))
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1 iff the normalized prediction equals any normalized gold.
pub fn exact_match(pred: &str, golds: &[&str]) -> Result<u32> {
    if golds.is_empty() {
        return Err(Error::contract("exact_match: golds must be nonempty"));
    }
    let p = normalize_answer(pred);
    Ok(u32::from(golds.iter().any(|g| normalize_answer(g) == p)))
}

fn token_counts(text: &str) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for tok in text.split_whitespace() {
        *counts.entry(tok).or_insert(0) += 1;
    }
    counts
}

fn f1_single(pred_norm: &str, gold_norm: &str) -> Scalar {
    if pred_norm.is_empty() && gold_norm.is_empty() {
        return 1.0;
    }
    if pred_norm.is_empty() || gold_norm.is_empty() {
        return 0.0;
    }
    let pc = token_counts(pred_norm);
    let gc = token_counts(gold_norm);
    let common: usize = pc
        .iter()
        .map(|(tok, &n)| n.min(gc.get(tok).copied().unwrap_or(0)))
        .sum();
    if common == 0 {
        return 0.0;
    }
    let n_pred: usize = pc.values().sum();
    let n_gold: usize = gc.values().sum();
    let precision = common as Scalar / n_pred as Scalar;
    let recall = common as Scalar / n_gold as Scalar;
    2.0 * precision * recall / (precision + recall)
}

/// Max over golds of the bag-of-tokens F1 on normalized text.
pub fn f1(pred: &str, golds: &[&str]) -> Result<Scalar> {
    if golds.is_empty() {
        return Err(Error::contract("f1: golds must be nonempty"));
    }
    let p = normalize_answer(pred);
    Ok(golds
        .iter()
        .map(|g| f1_single(&p, &normalize_answer(g)))
        .fold(0.0, Scalar::max))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub name: String,
    pub f1: Scalar,
    pub em: Scalar,
    pub count: usize,
}

/// Per-dataset and example-weighted aggregate scores, 0-100 scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub datasets: Vec<DatasetMetrics>,
    pub aggregate_f1: Scalar,
    pub aggregate_em: Scalar,
    pub total: usize,
}

impl MetricReport {
    /// Round every score to 2 decimals (report-file convention).
    pub fn rounded(mut self) -> Self {
        let r = |v: Scalar| (v * 100.0).round() / 100.0;
        for d in &mut self.datasets {
            d.f1 = r(d.f1);
            d.em = r(d.em);
        }
        self.aggregate_f1 = r(self.aggregate_f1);
        self.aggregate_em = r(self.aggregate_em);
        self
    }
}

/// Score (dataset, prediction, golds) rows.
pub fn metric_report<'a>(
    rows: impl IntoIterator<Item = (&'a str, &'a str, Vec<&'a str>)>,
) -> Result<MetricReport> {
    let mut order: Vec<String> = Vec::new();
    let mut sums: HashMap<String, (Scalar, Scalar, usize)> = HashMap::new();
    for (dataset, pred, golds) in rows {
        let f = f1(pred, &golds)?;
        let e = exact_match(pred, &golds)? as Scalar;
        if !sums.contains_key(dataset) {
            order.push(dataset.to_string());
        }
        let slot = sums.entry(dataset.to_string()).or_insert((0.0, 0.0, 0));
        slot.0 += f;
        slot.1 += e;
        slot.2 += 1;
    }

    let mut datasets = Vec::with_capacity(order.len());
    let (mut f_total, mut e_total, mut n_total) = (0.0, 0.0, 0usize);
    for name in order {
        let (f, e, n) = sums[&name];
        f_total += f;
        e_total += e;
        n_total += n;
        datasets.push(DatasetMetrics {
            name,
            f1: 100.0 * f / n as Scalar,
            em: 100.0 * e / n as Scalar,
            count: n,
        });
    }
    if n_total == 0 {
        return Err(Error::data("metric_report: no examples to score"));
    }
    Ok(MetricReport {
        datasets,
        aggregate_f1: 100.0 * f_total / n_total as Scalar,
        aggregate_em: 100.0 * e_total / n_total as Scalar,
        total: n_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Gupta Empire."), "gupta empire");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("music"), "music");
        // "in" is not an article.
        assert_eq!(normalize_answer("In 1900"), "in 1900");
    }

    #[test]
    fn exact_match_samples() {
        assert_eq!(exact_match("Emily Perkins", &["Emily Perkins"]).unwrap(), 1);
        assert_eq!(exact_match("December 1941", &["January 1942"]).unwrap(), 0);
        assert_eq!(exact_match("In 1900", &["1900"]).unwrap(), 0);
        assert!(exact_match("x", &[]).is_err());
    }

    #[test]
    fn f1_music_industry_is_two_thirds() {
        let v = f1("music industry", &["music"]).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_edges() {
        assert_eq!(f1("same tokens", &["same tokens"]).unwrap(), 1.0);
        assert_eq!(f1("alpha", &["beta"]).unwrap(), 0.0);
        assert_eq!(f1("", &[""]).unwrap(), 1.0);
        assert_eq!(f1("word", &[""]).unwrap(), 0.0);
        assert_eq!(f1("", &["word"]).unwrap(), 0.0);
        // Max over golds.
        assert_eq!(f1("music", &["industry", "music"]).unwrap(), 1.0);
    }

    #[test]
    fn em_implies_perfect_f1() {
        let cases = [("The Answer!", "answer"), ("a b c", "b c a")];
        for (pred, gold) in cases {
            if exact_match(pred, &[gold]).unwrap() == 1 {
                assert_eq!(f1(pred, &[gold]).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn report_aggregates_example_weighted() {
        let rows = vec![
            ("d1", "music industry", vec!["music"]),
            ("d1", "music", vec!["music"]),
            ("d2", "wrong", vec!["right"]),
        ];
        let report = metric_report(rows).unwrap();
        assert_eq!(report.datasets.len(), 2);
        assert_eq!(report.total, 3);
        let d1 = &report.datasets[0];
        assert!((d1.f1 - 100.0 * (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-9);
        assert_eq!(d1.em, 50.0);
        let want_f1 = 100.0 * (2.0 / 3.0 + 1.0 + 0.0) / 3.0;
        assert!((report.aggregate_f1 - want_f1).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(&once), once);
        }

        #[test]
        fn f1_symmetric_for_single_gold(a in "[a-c ]{0,12}", b in "[a-c ]{0,12}") {
            let ab = f1(&a, &[b.as_str()]).unwrap();
            let ba = f1(&b, &[a.as_str()]).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
        }

        #[test]
        fn em_one_implies_f1_one(a in "[a-c ]{0,12}", b in "[a-c ]{0,12}") {
            if exact_match(&a, &[b.as_str()]).unwrap() == 1 {
                prop_assert_eq!(f1(&a, &[b.as_str()]).unwrap(), 1.0);
            }
        }
    }
}
