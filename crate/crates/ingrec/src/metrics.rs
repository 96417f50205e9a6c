//! Example-based multi-label evaluation: a decision rule turns per-label
//! probabilities into a predicted set, per-sample precision/recall are
//! averaged over samples, and F1 is the harmonic mean of the averaged
//! precision and recall. A uniform random K-subset baseline is included.

use crate::error::{Error, Result};
use crate::losses::{ProbabilityVector, TargetVector};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecisionRule {
    /// Pick every label with probability ≥ t.
    Threshold(f64),
    /// Pick the K highest-scoring labels, ties broken by lower index.
    TopK(usize),
}

impl std::fmt::Display for DecisionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecisionRule::Threshold(t) => write!(f, "threshold={t}"),
            DecisionRule::TopK(k) => write!(f, "top_k={k}"),
        }
    }
}

/// A decided prediction: the scores it came from and the chosen label ids.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub scores: Vec<f64>,
    pub chosen: BTreeSet<usize>,
}

impl PredictionSet {
    /// A score-less prediction (baselines, externally supplied label sets).
    pub fn from_chosen(chosen: BTreeSet<usize>) -> Self {
        PredictionSet {
            scores: Vec::new(),
            chosen,
        }
    }
}

/// Apply the decision rule to one sample's probabilities.
pub fn decide(scores: &ProbabilityVector, rule: DecisionRule) -> Result<PredictionSet> {
    let n = scores.len();
    let chosen = match rule {
        DecisionRule::Threshold(t) => {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidRule(format!(
                    "threshold {t} outside [0, 1]"
                )));
            }
            scores
                .probs()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p >= t)
                .map(|(i, _)| i)
                .collect()
        }
        DecisionRule::TopK(k) => {
            if k > n {
                return Err(Error::InvalidRule(format!("top-K {k} exceeds {n} labels")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            // Stable sort by descending score keeps lower indices first on ties.
            order.sort_by(|&a, &b| {
                scores.probs()[b]
                    .partial_cmp(&scores.probs()[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            order[..k].iter().copied().collect()
        }
    };
    Ok(PredictionSet {
        scores: scores.probs().to_vec(),
        chosen,
    })
}

/// Evaluation report; precision/recall/f1 are percentages, `per_sample`
/// holds per-sample (precision, recall) fractions.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub split_name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_sample: Vec<(f64, f64)>,
    pub n_samples: usize,
    pub rule: String,
}

/// Serialized (JSON) face of a report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportDocument {
    pub split: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_samples: usize,
    pub rule: String,
}

impl MetricsReport {
    pub fn document(&self) -> ReportDocument {
        ReportDocument {
            split: self.split_name.clone(),
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
            n_samples: self.n_samples,
            rule: self.rule.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.document()).expect("report serializes")
    }

    /// Flat `key = value` text rendering, percentages at table precision.
    pub fn to_text(&self) -> String {
        format!(
            "split = {}\nprecision = {:.2}\nrecall = {:.2}\nf1 = {:.2}\nn_samples = {}\nrule = {}\n",
            self.split_name, self.precision, self.recall, self.f1, self.n_samples, self.rule
        )
    }
}

/// Harmonic mean of two percentages; 0 when both are 0.
pub fn f1_percent(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Example-based evaluation over aligned prediction/truth lists.
pub fn evaluate(
    predictions: &[PredictionSet],
    truths: &[TargetVector],
    split_name: &str,
    rule: &str,
) -> Result<MetricsReport> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::LengthMismatch("nothing to evaluate".into()));
    }
    let mut per_sample = Vec::with_capacity(predictions.len());
    let mut sum_p = 0.0;
    let mut sum_r = 0.0;
    for (pred, truth) in predictions.iter().zip(truths) {
        let hits = pred
            .chosen
            .iter()
            .filter(|&&i| i < truth.len() && truth.is_set(i))
            .count() as f64;
        let truth_size = truth.cardinality();
        // Empty chosen set => precision 0; empty truth => recall 0.
        let p = if pred.chosen.is_empty() {
            0.0
        } else {
            hits / pred.chosen.len() as f64
        };
        let r = if truth_size == 0 {
            0.0
        } else {
            hits / truth_size as f64
        };
        sum_p += p;
        sum_r += r;
        per_sample.push((p, r));
    }
    let n = predictions.len() as f64;
    let precision = sum_p / n * 100.0;
    let recall = sum_r / n * 100.0;
    Ok(MetricsReport {
        split_name: split_name.to_string(),
        precision,
        recall,
        f1: f1_percent(precision, recall),
        per_sample,
        n_samples: predictions.len(),
        rule: rule.to_string(),
    })
}

/// Uniform random K-subset prediction baseline, evaluated against `truths`.
pub fn random_baseline(
    n_labels: usize,
    k: usize,
    truths: &[TargetVector],
    seed: u64,
) -> Result<MetricsReport> {
    if k == 0 || k > n_labels {
        return Err(Error::InvalidRule(format!(
            "baseline k={k} outside 1..={n_labels}"
        )));
    }
    let mut rng = Rng::seed_from(seed);
    let mut scratch = Vec::new();
    let predictions: Vec<PredictionSet> = truths
        .iter()
        .map(|_| {
            let subset = rng.subset(n_labels, k, &mut scratch);
            PredictionSet::from_chosen(subset.into_iter().collect())
        })
        .collect();
    evaluate(&predictions, truths, "random", &format!("random_k={k}"))
}

/// K for the baseline: the rounded mean number of labels per sample.
pub fn baseline_k(truths: &[TargetVector]) -> usize {
    if truths.is_empty() {
        return 1;
    }
    let mean = truths.iter().map(|t| t.cardinality()).sum::<usize>() as f64 / truths.len() as f64;
    (mean.round() as usize).max(1)
}
