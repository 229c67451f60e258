//! Metrics, rule-utilization quadrants and property-cliff pairs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Metric, MoleculeRecord};
use crate::descriptors::{tanimoto, Fingerprint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} samples")]
    Empty(usize),
    #[error("labels must contain both classes (AUROC) or a positive (AUPRC)")]
    DegenerateLabels,
    #[error("one side is constant; correlation undefined")]
    ZeroVariance,
    #[error("labels must be 0 or 1")]
    NonBinaryLabel,
    #[error("no correctness flag for record {0}")]
    MissingMember(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub value: f64,
    pub n: usize,
    pub higher_is_better: bool,
}

impl MetricReport {
    fn new(metric: Metric, value: f64, n: usize) -> MetricReport {
        MetricReport {
            metric,
            value,
            n,
            higher_is_better: metric.higher_is_better(),
        }
    }
}

fn check_lengths(a: &[f64], b: &[f64], min: usize) -> Result<(), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < min {
        return Err(EvalError::Empty(min));
    }
    Ok(())
}

fn binary_labels(labels: &[f64]) -> Result<(usize, usize), EvalError> {
    let mut pos = 0;
    for &l in labels {
        if l == 1.0 {
            pos += 1;
        } else if l != 0.0 {
            return Err(EvalError::NonBinaryLabel);
        }
    }
    Ok((pos, labels.len() - pos))
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<MetricReport, EvalError> {
    check_lengths(pred, truth, 1)?;
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(MetricReport::new(Metric::Mae, total / pred.len() as f64, pred.len()))
}

/// 1-based ranks, tied values sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half; computed from average ranks.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<MetricReport, EvalError> {
    check_lengths(scores, labels, 2)?;
    let (pos, neg) = binary_labels(labels)?;
    if pos == 0 || neg == 0 {
        return Err(EvalError::DegenerateLabels);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1.0).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(MetricReport::new(Metric::Auroc, u / (pos * neg) as f64, scores.len()))
}

/// Average precision. Ranking is by score descending; equal scores keep
/// their input order.
pub fn auprc(scores: &[f64], labels: &[f64]) -> Result<MetricReport, EvalError> {
    check_lengths(scores, labels, 1)?;
    let (pos, _) = binary_labels(labels)?;
    if pos == 0 {
        return Err(EvalError::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == 1.0 {
            hits += 1;
            ap += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(MetricReport::new(Metric::Auprc, ap / pos as f64, scores.len()))
}

/// Pearson correlation of average ranks.
pub fn spearman(pred: &[f64], truth: &[f64]) -> Result<MetricReport, EvalError> {
    check_lengths(pred, truth, 2)?;
    let (a, b) = (average_ranks(pred), average_ranks(truth));
    let mean = (a.len() + 1) as f64 / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let r = (cov / (va * vb).sqrt()).clamp(-1.0, 1.0);
    Ok(MetricReport::new(Metric::Spearman, r, pred.len()))
}

pub fn evaluate(metric: Metric, pred: &[f64], truth: &[f64]) -> Result<MetricReport, EvalError> {
    match metric {
        Metric::Mae => mae(pred, truth),
        Metric::Auroc => auroc(pred, truth),
        Metric::Auprc => auprc(pred, truth),
        Metric::Spearman => spearman(pred, truth),
    }
}

/// Hard correctness of classification scores: a score at or above
/// `threshold` predicts the positive class.
pub fn correctness(scores: &[f64], labels: &[f64], threshold: f64) -> Vec<bool> {
    scores
        .iter()
        .zip(labels)
        .map(|(&s, &l)| (s >= threshold) == (l == 1.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QuadrantCounts {
    pub both_correct: usize,
    pub only_tree: usize,
    pub only_llm: usize,
    pub both_wrong: usize,
}

impl QuadrantCounts {
    pub fn total(&self) -> usize {
        self.both_correct + self.only_tree + self.only_llm + self.both_wrong
    }
}

pub fn quadrants(tree_correct: &[bool], model_correct: &[bool]) -> Result<QuadrantCounts, EvalError> {
    if tree_correct.len() != model_correct.len() {
        return Err(EvalError::LengthMismatch(tree_correct.len(), model_correct.len()));
    }
    let mut q = QuadrantCounts::default();
    for (&t, &m) in tree_correct.iter().zip(model_correct) {
        match (t, m) {
            (true, true) => q.both_correct += 1,
            (true, false) => q.only_tree += 1,
            (false, true) => q.only_llm += 1,
            (false, false) => q.both_wrong += 1,
        }
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CliffPair {
    pub ids: (usize, usize),
    pub similarity: f64,
    pub labels: (u8, u8),
}

pub const CLIFF_THRESHOLD: f64 = 0.8;

/// Pairs with similarity strictly above `threshold` and opposite labels,
/// ordered by `(smaller id, larger id)`.
///
/// Panics if `fingerprints` is not aligned with `records`.
pub fn find_cliff_pairs(records: &[MoleculeRecord], fingerprints: &[Fingerprint], threshold: f64) -> Vec<CliffPair> {
    assert_eq!(records.len(), fingerprints.len(), "one fingerprint per record");
    let mut pairs = Vec::new();
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            let (a, b) = (&records[i], &records[j]);
            if (a.label == 1.0) == (b.label == 1.0) {
                continue;
            }
            let Ok(sim) = tanimoto(&fingerprints[i], &fingerprints[j]) else {
                continue;
            };
            if sim > threshold {
                let (first, second) = if a.id <= b.id { (a, b) } else { (b, a) };
                pairs.push(CliffPair {
                    ids: (first.id, second.id),
                    similarity: sim,
                    labels: (first.label as u8, second.label as u8),
                });
            }
        }
    }
    pairs.sort_by_key(|p| p.ids);
    pairs
}

/// Number of pairs whose two members are both predicted correctly.
pub fn cliff_accuracy(pairs: &[CliffPair], correct: &BTreeMap<usize, bool>) -> Result<usize, EvalError> {
    let mut count = 0;
    for p in pairs {
        let a = *correct.get(&p.ids.0).ok_or(EvalError::MissingMember(p.ids.0))?;
        let b = *correct.get(&p.ids.1).ok_or(EvalError::MissingMember(p.ids.1))?;
        count += (a && b) as usize;
    }
    Ok(count)
}

/// A metric row as exported to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub property: String,
    pub metric: Metric,
    pub value: f64,
    pub n: usize,
}

impl ReportRow {
    pub fn new(property: &str, report: &MetricReport) -> ReportRow {
        ReportRow {
            property: property.into(),
            metric: report.metric,
            value: report.value,
            n: report.n,
        }
    }
}

fn arrow(metric: Metric) -> &'static str {
    if metric.higher_is_better() {
        "(↑)"
    } else {
        "(↓)"
    }
}

/// Plain-text table: one row per `(label, report)`.
pub fn render_table(property: &str, rows: &[(String, MetricReport)]) -> String {
    let mut out = String::new();
    let width = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(6);
    let _ = writeln!(out, "{property}");
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "  {label:<width$}  {:>8} {}  {:>8.3}  n={}",
            r.metric.name(),
            arrow(r.metric),
            r.value,
            r.n
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub property: String,
    pub metric: Metric,
    pub small: f64,
    pub large: f64,
    /// Change from the small to the large forest, positive when the large
    /// one is better.
    pub improvement: f64,
}

impl ScalingRow {
    pub fn new(property: &str, metric: Metric, small: f64, large: f64) -> ScalingRow {
        let improvement = if metric.higher_is_better() { large - small } else { small - large };
        ScalingRow {
            property: property.into(),
            metric,
            small,
            large,
            improvement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub small_n: usize,
    pub large_n: usize,
    pub rows: Vec<ScalingRow>,
}

impl ScalingTable {
    pub fn render(&self) -> String {
        let small = format!("N={}", self.small_n);
        let large = format!("N={}", self.large_n);
        let width = self.rows.iter().map(|r| r.property.chars().count()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:<14}  {small:>8}  {large:>16}", "Property", "Metric");
        for r in &self.rows {
            let sign = if r.improvement >= 0.0 { "+" } else { "-" };
            let metric = format!("{} {}", r.metric.name(), arrow(r.metric));
            let cell = format!("{:.3} ({sign}{:.3})", r.large, r.improvement.abs());
            let _ = writeln!(out, "{:<width$}  {metric:<14}  {:>8.3}  {cell:>16}", r.property, r.small);
        }
        out
    }
}
