//! Output heads and losses: sigmoid + binary cross-entropy for multi-label
//! prediction, softmax + categorical cross-entropy for single-label.
//!
//! Reductions: losses sum over labels and average over batch samples, and all
//! gradients are taken with respect to that reported quantity, so the
//! per-sample combined sigmoid+BCE gradient is (p − y) and the batched one is
//! (p − y) / batch.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities are clamped into this open interval before any logarithm.
pub const PROB_CLAMP: f64 = 1e-12;

/// Binary ground-truth vector over the N vocabulary labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetVector {
    bits: Vec<u8>,
}

impl TargetVector {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::LengthMismatch(
                "target bits must be 0 or 1".into(),
            ));
        }
        Ok(TargetVector { bits })
    }

    pub fn from_indices(indices: &[usize], n_labels: usize) -> Result<Self> {
        let mut bits = vec![0u8; n_labels];
        for &i in indices {
            if i >= n_labels {
                return Err(Error::ClassOutOfRange {
                    index: i,
                    n_labels,
                });
            }
            bits[i] = 1;
        }
        Ok(TargetVector { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn is_set(&self, i: usize) -> bool {
        self.bits[i] == 1
    }

    /// Number of positive labels.
    pub fn cardinality(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
            .collect()
    }

    /// Stack targets into a `[batch, N]` tensor of 0.0/1.0 entries.
    pub fn batch_tensor(targets: &[TargetVector]) -> Result<Tensor> {
        let first = targets
            .first()
            .ok_or_else(|| Error::LengthMismatch("empty target batch".into()))?;
        let n = first.len();
        let mut data = Vec::with_capacity(targets.len() * n);
        for t in targets {
            if t.len() != n {
                return Err(Error::LengthMismatch(format!(
                    "target length {} vs {}",
                    t.len(),
                    n
                )));
            }
            data.extend(t.bits.iter().map(|&b| b as f64));
        }
        Tensor::new(vec![targets.len(), n], data)
    }
}

/// Per-sample probabilities in the open interval (0, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Self {
        ProbabilityVector {
            probs: probs
                .into_iter()
                .map(|p| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
                .collect(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Numerically stable logistic function.
pub fn sigmoid_scalar(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    clamp_prob(p)
}

/// Elementwise sigmoid over a `[batch, N]` logit tensor.
pub fn sigmoid(logits: &Tensor) -> Tensor {
    logits.map(sigmoid_scalar)
}

/// Row-wise softmax over a `[batch, N]` logit tensor (log-sum-exp shifted).
pub fn softmax(logits: &Tensor) -> Tensor {
    let n = logits.sample_len();
    let mut out = logits.clone();
    for b in 0..logits.batch() {
        let row = out.sample_mut(b);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = clamp_prob(*v / sum);
        }
        debug_assert_eq!(row.len(), n);
    }
    out
}

/// Rows of a probability tensor as `ProbabilityVector`s.
pub fn probability_rows(probs: &Tensor) -> Vec<ProbabilityVector> {
    (0..probs.batch())
        .map(|b| ProbabilityVector::new(probs.sample(b).to_vec()))
        .collect()
}

/// Binary cross-entropy from probabilities (clamped), summed over labels and
/// averaged over the batch.
pub fn bce_from_probs(probs: &Tensor, targets: &Tensor) -> Result<f64> {
    if probs.shape() != targets.shape() {
        return Err(Error::LengthMismatch(format!(
            "probabilities {:?} vs targets {:?}",
            probs.shape(),
            targets.shape()
        )));
    }
    let batch = probs.batch() as f64;
    let mut total = 0.0;
    for (&p, &y) in probs.data().iter().zip(targets.data()) {
        let p = clamp_prob(p);
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(total / batch)
}

/// Fused sigmoid + binary cross-entropy computed stably from logits.
///
/// Returns the loss (labels summed, batch averaged) and its gradient with
/// respect to the logits, `(sigmoid(z) − y) / batch`.
pub fn sigmoid_bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if logits.shape() != targets.shape() {
        return Err(Error::LengthMismatch(format!(
            "logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    let batch = logits.batch() as f64;
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (g, (&z, &y)) in grad
        .data_mut()
        .iter_mut()
        .zip(logits.data().iter().zip(targets.data()))
    {
        // max(z, 0) − z·y + ln(1 + exp(−|z|))
        total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        *g = (sigmoid_scalar(z) - y) / batch;
    }
    Ok((total / batch, grad))
}

/// Categorical cross-entropy from softmax probabilities (clamped before the
/// log), averaged over the batch.
pub fn cce_from_probs(probs: &Tensor, classes: &[usize]) -> Result<f64> {
    let n = probs.sample_len();
    if probs.batch() != classes.len() {
        return Err(Error::LengthMismatch(format!(
            "{} probability rows vs {} class indices",
            probs.batch(),
            classes.len()
        )));
    }
    let mut total = 0.0;
    for (b, &c) in classes.iter().enumerate() {
        if c >= n {
            return Err(Error::ClassOutOfRange {
                index: c,
                n_labels: n,
            });
        }
        total -= clamp_prob(probs.sample(b)[c]).ln();
    }
    Ok(total / classes.len() as f64)
}

/// Fused softmax + categorical cross-entropy.
///
/// Returns the batch-averaged loss and its logit gradient,
/// `(softmax(z) − onehot(class)) / batch`.
pub fn softmax_cce_with_logits(logits: &Tensor, classes: &[usize]) -> Result<(f64, Tensor)> {
    let n = logits.sample_len();
    if logits.batch() != classes.len() {
        return Err(Error::LengthMismatch(format!(
            "{} logit rows vs {} class indices",
            logits.batch(),
            classes.len()
        )));
    }
    for &c in classes {
        if c >= n {
            return Err(Error::ClassOutOfRange {
                index: c,
                n_labels: n,
            });
        }
    }
    let batch = logits.batch() as f64;
    let mut grad = softmax(logits);
    let loss = cce_from_probs(&grad, classes)?;
    for (b, &c) in classes.iter().enumerate() {
        let row = grad.sample_mut(b);
        for v in row.iter_mut() {
            *v /= batch;
        }
        row[c] -= 1.0 / batch;
    }
    Ok((loss, grad))
}
