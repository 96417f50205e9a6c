//! Neuron-specialization analysis: which samples drive a hidden unit
//! hardest, and which ground-truth ingredient those samples share.

use crate::data::{Corpus, ImageStore};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::Tensor;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// sample × neuron activation matrix for one layer.
#[derive(Clone, Debug)]
pub struct ActivationMatrix {
    pub layer_index: usize,
    pub ids: Vec<String>,
    pub n_neurons: usize,
    /// Row-major `[sample, neuron]`.
    pub values: Vec<f64>,
}

impl ActivationMatrix {
    pub fn activation(&self, sample: usize, neuron: usize) -> f64 {
        self.values[sample * self.n_neurons + neuron]
    }

    /// Population variance of each neuron's activations.
    pub fn neuron_variances(&self) -> Vec<f64> {
        let n = self.ids.len() as f64;
        (0..self.n_neurons)
            .map(|j| {
                let mean = (0..self.ids.len())
                    .map(|i| self.activation(i, j))
                    .sum::<f64>()
                    / n;
                (0..self.ids.len())
                    .map(|i| (self.activation(i, j) - mean).powi(2))
                    .sum::<f64>()
                    / n
            })
            .collect()
    }

    /// Neuron indices ranked by activation variance, highest first.
    pub fn top_by_variance(&self, m: usize) -> Vec<usize> {
        let variances = self.neuron_variances();
        let mut order: Vec<usize> = (0..self.n_neurons).collect();
        order.sort_by(|&a, &b| {
            variances[b]
                .partial_cmp(&variances[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate(m);
        order
    }
}

/// Record activations of every neuron in `layer_index` for the given ids.
/// Conv maps are reduced spatially by mean; dense activations are taken
/// as-is. Flatten carries no activations of its own and is rejected.
pub fn neuron_activations(
    net: &Network,
    images: &ImageStore,
    ids: &[String],
    layer_index: usize,
    batch_size: usize,
) -> Result<ActivationMatrix> {
    let layer = net
        .layers
        .get(layer_index)
        .ok_or_else(|| Error::BadSubset(format!("layer {layer_index} out of range")))?;
    if matches!(layer, crate::layers::Layer::Flatten) {
        return Err(Error::NotInspectable {
            layer: layer_index,
            kind: layer.kind_name(),
        });
    }
    if ids.is_empty() {
        return Err(Error::BadSubset("no samples to inspect".into()));
    }
    let mut values = Vec::new();
    let mut n_neurons = 0usize;
    for chunk in ids.chunks(batch_size.max(1)) {
        let tensors: Vec<&Tensor> = chunk
            .iter()
            .map(|id| {
                images
                    .get(id)
                    .ok_or_else(|| Error::BadSubset(format!("no input tensor for id {id:?}")))
            })
            .collect::<Result<_>>()?;
        let x = Tensor::stack(&tensors)?;
        let (_, cache) = net.forward(&x)?;
        let act = cache.layer_output(layer_index);
        match act.sample_shape().len() {
            1 => {
                n_neurons = act.sample_shape()[0];
                for b in 0..chunk.len() {
                    values.extend_from_slice(act.sample(b));
                }
            }
            3 => {
                let [c, h, w] = [
                    act.sample_shape()[0],
                    act.sample_shape()[1],
                    act.sample_shape()[2],
                ];
                n_neurons = c;
                let spatial = (h * w) as f64;
                for b in 0..chunk.len() {
                    let s = act.sample(b);
                    for ch in 0..c {
                        let sum: f64 = s[ch * h * w..(ch + 1) * h * w].iter().sum();
                        values.push(sum / spatial);
                    }
                }
            }
            other => {
                return Err(Error::NotInspectable {
                    layer: layer_index,
                    kind: if other == 0 { "scalar" } else { "unknown" },
                })
            }
        }
    }
    Ok(ActivationMatrix {
        layer_index,
        ids: ids.to_vec(),
        n_neurons,
        values,
    })
}

/// Per-neuron specialization report.
#[derive(Clone, Debug, Serialize)]
pub struct NeuronReport {
    pub layer_index: usize,
    pub neuron_index: usize,
    /// (recipe id, activation), sorted by activation descending, ties by id.
    pub top_samples: Vec<(String, f64)>,
    /// Most frequent ground-truth ingredient among the top samples.
    pub top_ingredient: String,
    /// Per top sample: does its truth set contain `top_ingredient`?
    pub containment: Vec<bool>,
}

impl NeuronReport {
    pub fn containment_count(&self) -> usize {
        self.containment.iter().filter(|&&c| c).count()
    }
}

/// Build the top-k report for the given neurons (all neurons when `None`).
///
/// `mask_over` optionally excludes ingredients present in more than that
/// fraction of the inspected subset from the dominant-ingredient vote.
pub fn top_k_report(
    activations: &ActivationMatrix,
    corpus: &Corpus,
    k: usize,
    neurons: Option<&[usize]>,
    mask_over: Option<f64>,
) -> Result<Vec<NeuronReport>> {
    if k == 0 || k > activations.ids.len() {
        return Err(Error::BadSubset(format!(
            "k={k} outside 1..={}",
            activations.ids.len()
        )));
    }
    let truths: Vec<&std::collections::BTreeSet<String>> = activations
        .ids
        .iter()
        .map(|id| {
            corpus
                .recipe_by_id(id)
                .map(|r| &r.ingredients)
                .ok_or_else(|| Error::BadSubset(format!("id {id:?} not in corpus")))
        })
        .collect::<Result<_>>()?;

    // Optional ubiquity mask over the whole inspected subset.
    let masked: std::collections::BTreeSet<String> = match mask_over {
        Some(fraction) => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for t in &truths {
                for name in t.iter() {
                    *counts.entry(name).or_insert(0) += 1;
                }
            }
            let cutoff = fraction * activations.ids.len() as f64;
            counts
                .into_iter()
                .filter(|(_, c)| *c as f64 > cutoff)
                .map(|(n, _)| n.to_string())
                .collect()
        }
        None => Default::default(),
    };

    let all_neurons: Vec<usize> = (0..activations.n_neurons).collect();
    let chosen = neurons.unwrap_or(&all_neurons);
    let mut reports = Vec::with_capacity(chosen.len());
    for &neuron in chosen {
        if neuron >= activations.n_neurons {
            return Err(Error::BadSubset(format!(
                "neuron {neuron} outside 0..{}",
                activations.n_neurons
            )));
        }
        let mut order: Vec<usize> = (0..activations.ids.len()).collect();
        order.sort_by(|&a, &b| {
            activations
                .activation(b, neuron)
                .partial_cmp(&activations.activation(a, neuron))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(activations.ids[a].cmp(&activations.ids[b]))
        });
        let top: Vec<usize> = order[..k].to_vec();

        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for &i in &top {
            for name in truths[i].iter() {
                if !masked.contains(name) {
                    *freq.entry(name).or_insert(0) += 1;
                }
            }
        }
        // Highest frequency, ties to the lexicographically smallest name
        // (BTreeMap iterates names in order, strict > keeps the first).
        let mut top_ingredient = String::new();
        let mut best = 0usize;
        for (name, count) in &freq {
            if *count > best {
                best = *count;
                top_ingredient = name.to_string();
            }
        }
        let containment: Vec<bool> = top
            .iter()
            .map(|&i| truths[i].contains(&top_ingredient))
            .collect();
        reports.push(NeuronReport {
            layer_index: activations.layer_index,
            neuron_index: neuron,
            top_samples: top
                .iter()
                .map(|&i| (activations.ids[i].clone(), activations.activation(i, neuron)))
                .collect(),
            top_ingredient,
            containment,
        });
    }
    Ok(reports)
}

pub fn reports_to_json(reports: &[NeuronReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

/// Plain-text table: one block per neuron, one row per top sample.
pub fn reports_to_text(reports: &[NeuronReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(
            out,
            "layer {} neuron {} | top ingredient: {} ({}/{} contain it)",
            r.layer_index,
            r.neuron_index,
            r.top_ingredient,
            r.containment_count(),
            r.containment.len()
        );
        for ((id, act), contains) in r.top_samples.iter().zip(&r.containment) {
            let mark = if *contains { "+" } else { "-" };
            let _ = writeln!(out, "  {mark} {act:>12.6}  {id}");
        }
    }
    out
}

/// Contact sheet: one row of top-k images per neuron, 1px white separators.
/// Requires pixel inputs of identical `[3, h, w]` shape.
pub fn contact_sheet(
    reports: &[NeuronReport],
    images: &ImageStore,
    path: &Path,
) -> Result<()> {
    let first = reports
        .first()
        .and_then(|r| r.top_samples.first())
        .and_then(|(id, _)| images.get(id))
        .ok_or_else(|| Error::BadSubset("no images for contact sheet".into()))?;
    if first.rank() != 3 || first.shape()[0] != 3 {
        return Err(Error::BadSubset(format!(
            "contact sheet needs [3, h, w] pixel inputs, got {:?}",
            first.shape()
        )));
    }
    let (h, w) = (first.shape()[1], first.shape()[2]);
    let k = reports.iter().map(|r| r.top_samples.len()).max().unwrap_or(0);
    let sheet_h = reports.len() * h + reports.len().saturating_sub(1);
    let sheet_w = k * w + k.saturating_sub(1);
    let mut sheet = Tensor::filled(&[3, sheet_h, sheet_w], 1.0);
    for (row, report) in reports.iter().enumerate() {
        for (col, (id, _)) in report.top_samples.iter().enumerate() {
            let img = images
                .get(id)
                .ok_or_else(|| Error::BadSubset(format!("no image for id {id:?}")))?;
            if img.shape() != first.shape() {
                return Err(Error::BadSubset(format!(
                    "image {id:?} shaped {:?}, expected {:?}",
                    img.shape(),
                    first.shape()
                )));
            }
            let (y0, x0) = (row * (h + 1), col * (w + 1));
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        sheet.data_mut()[c * sheet_h * sheet_w + (y0 + y) * sheet_w + x0 + x] =
                            img.data()[c * h * w + y * w + x];
                    }
                }
            }
        }
    }
    crate::data::write_ppm(path, &sheet)
}
