//! Mini-batch SGD training with momentum, best-validation-F1 model
//! selection, the transfer workflow (backbone reuse + head re-init), and
//! checkpoint I/O (JSON header + little-endian f64 payload).

use crate::data::{Corpus, ImageStore, SplitAssignment};
use crate::error::{Error, Result};
use crate::losses::{
    self, sigmoid_bce_with_logits, softmax_cce_with_logits, TargetVector,
};
use crate::metrics::{self, decide, DecisionRule, MetricsReport, PredictionSet};
use crate::network::{Head, Network};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::vocab::Vocabulary;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

/// Validation decisions use the natural sigmoid operating point.
pub const VAL_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub head: Head,
    /// Stop after this many epochs without a validation-F1 improvement.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            momentum: 0.9,
            batch_size: 16,
            epochs: 30,
            seed: 0,
            head: Head::SigmoidMultilabel,
            early_stop_patience: 10,
        }
    }
}

impl TrainConfig {
    fn validate(&self, n_train: usize) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::BadTrainConfig("learning_rate must be ≥ 0".into()));
        }
        if self.momentum < 0.0 || self.momentum >= 1.0 {
            return Err(Error::BadTrainConfig("momentum must be in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.batch_size > n_train {
            return Err(Error::BadTrainConfig(format!(
                "batch_size {} outside 1..={n_train}",
                self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::BadTrainConfig("epochs must be ≥ 1".into()));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::BadTrainConfig(
                "early_stop_patience must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// A corpus bound to its inputs and vocabulary, ready for batching.
pub struct Dataset<'a> {
    pub corpus: &'a Corpus,
    pub images: &'a ImageStore,
    pub vocab: &'a Vocabulary,
}

impl<'a> Dataset<'a> {
    pub fn new(corpus: &'a Corpus, images: &'a ImageStore, vocab: &'a Vocabulary) -> Self {
        Dataset {
            corpus,
            images,
            vocab,
        }
    }

    /// Stack inputs and encode targets for the given ids, in order.
    pub fn batch(&self, ids: &[&str]) -> Result<(Tensor, Vec<TargetVector>)> {
        let mut tensors = Vec::with_capacity(ids.len());
        let mut targets = Vec::with_capacity(ids.len());
        for &id in ids {
            let image = self
                .images
                .get(id)
                .ok_or_else(|| Error::BadSubset(format!("no input tensor for id {id:?}")))?;
            tensors.push(image);
            targets.push(self.corpus.target_for(id, self.vocab, true)?);
        }
        Ok((Tensor::stack(&tensors)?, targets))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best-validation-F1 epoch.
    pub network: Network,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Momentum buffers, one (weight, bias) pair per parameterized layer.
struct Velocity {
    layers: Vec<Option<(Tensor, Tensor)>>,
}

impl Velocity {
    fn zeros(net: &Network) -> Self {
        Velocity {
            layers: net
                .layers
                .iter()
                .map(|l| match l {
                    crate::layers::Layer::Dense(d) => {
                        Some((Tensor::zeros(d.weight.shape()), Tensor::zeros(d.bias.shape())))
                    }
                    crate::layers::Layer::Conv2d(c) => {
                        Some((Tensor::zeros(c.weight.shape()), Tensor::zeros(c.bias.shape())))
                    }
                    _ => None,
                })
                .collect(),
        }
    }
}

fn apply_update(
    net: &mut Network,
    grads: &crate::network::Gradients,
    velocity: &mut Velocity,
    lr: f64,
    momentum: f64,
) {
    for (i, layer) in net.layers.iter_mut().enumerate() {
        if !layer.trainable() {
            continue;
        }
        let Some(g) = &grads.layers[i] else { continue };
        let Some((vw, vb)) = &mut velocity.layers[i] else {
            continue;
        };
        match layer {
            crate::layers::Layer::Dense(d) => {
                step(d.weight.data_mut(), vw.data_mut(), g.weight.data(), lr, momentum);
                step(d.bias.data_mut(), vb.data_mut(), g.bias.data(), lr, momentum);
            }
            crate::layers::Layer::Conv2d(c) => {
                step(c.weight.data_mut(), vw.data_mut(), g.weight.data(), lr, momentum);
                step(c.bias.data_mut(), vb.data_mut(), g.bias.data(), lr, momentum);
            }
            _ => {}
        }
    }
}

fn step(params: &mut [f64], velocity: &mut [f64], grads: &[f64], lr: f64, momentum: f64) {
    for ((p, v), &g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

/// Single-label class index per target; the softmax head requires exactly
/// one positive label per sample.
fn single_classes(targets: &[TargetVector]) -> Result<Vec<usize>> {
    targets
        .iter()
        .map(|t| {
            let idx = t.indices();
            if idx.len() != 1 {
                return Err(Error::BadTrainConfig(format!(
                    "softmax head needs exactly one label per sample, got {}",
                    idx.len()
                )));
            }
            Ok(idx[0])
        })
        .collect()
}

fn loss_and_grad(head: Head, logits: &Tensor, targets: &[TargetVector]) -> Result<(f64, Tensor)> {
    match head {
        Head::SigmoidMultilabel => {
            let t = TargetVector::batch_tensor(targets)?;
            sigmoid_bce_with_logits(logits, &t)
        }
        Head::SoftmaxSinglelabel => {
            let classes = single_classes(targets)?;
            softmax_cce_with_logits(logits, &classes)
        }
    }
}

/// Forward a list of ids in batches and decide label sets.
pub fn predict(
    net: &Network,
    data: &Dataset,
    ids: &[String],
    rule: DecisionRule,
    batch_size: usize,
) -> Result<Vec<(String, PredictionSet)>> {
    let mut out = Vec::with_capacity(ids.len());
    for chunk in ids.chunks(batch_size.max(1)) {
        let refs: Vec<&str> = chunk.iter().map(|s| s.as_str()).collect();
        let (x, _) = data.batch(&refs)?;
        let (logits, _) = net.forward(&x)?;
        let probs = match net.head {
            Head::SigmoidMultilabel => losses::sigmoid(&logits),
            Head::SoftmaxSinglelabel => losses::softmax(&logits),
        };
        for (b, id) in chunk.iter().enumerate() {
            let pv = losses::ProbabilityVector::new(probs.sample(b).to_vec());
            out.push((id.clone(), decide(&pv, rule)?));
        }
    }
    Ok(out)
}

/// Evaluate a network on the given ids with the given decision rule.
pub fn evaluate_network(
    net: &Network,
    data: &Dataset,
    ids: &[String],
    rule: DecisionRule,
    split_name: &str,
    batch_size: usize,
) -> Result<MetricsReport> {
    let predictions = predict(net, data, ids, rule, batch_size)?;
    let mut preds = Vec::with_capacity(predictions.len());
    let mut truths = Vec::with_capacity(predictions.len());
    for (id, pred) in predictions {
        truths.push(data.corpus.target_for(&id, data.vocab, true)?);
        preds.push(pred);
    }
    metrics::evaluate(&preds, &truths, split_name, &rule.to_string())
}

/// Train `net` on the corpus split, returning the best-validation-F1
/// parameters and the per-epoch history. Deterministic per
/// (corpus, split, config, seed).
pub fn train(
    net: &Network,
    data: &Dataset,
    split: &SplitAssignment,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::BadTrainConfig(
            "split needs non-empty train and val partitions".into(),
        ));
    }
    config.validate(split.train.len())?;
    let n = net.out_dim().ok_or_else(|| {
        Error::IncompatibleBackbone("network must end in a dense layer".into())
    })?;
    if n != data.vocab.len() {
        return Err(Error::BadTrainConfig(format!(
            "network predicts {n} labels but vocabulary has {}",
            data.vocab.len()
        )));
    }

    let mut current = net.clone();
    current.head = config.head;
    let mut velocity = Velocity::zeros(&current);
    let mut rng = Rng::seed_from(config.seed);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut stale_epochs = 0usize;

    let mut train_ids: Vec<&str> = split.train.iter().map(|s| s.as_str()).collect();
    let n_train = train_ids.len();

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut train_ids);
        let mut epoch_loss = 0.0;
        for chunk in train_ids.chunks(config.batch_size) {
            let (x, targets) = data.batch(chunk)?;
            let (logits, cache) = current.forward(&x)?;
            let (loss, dlogits) = loss_and_grad(config.head, &logits, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;
            let (grads, _) = current.backward(&cache, &dlogits)?;
            apply_update(
                &mut current,
                &grads,
                &mut velocity,
                config.learning_rate,
                config.momentum,
            );
        }
        let train_loss = epoch_loss / n_train as f64;

        let rule = match config.head {
            Head::SigmoidMultilabel => DecisionRule::Threshold(VAL_THRESHOLD),
            Head::SoftmaxSinglelabel => DecisionRule::TopK(1),
        };
        let val = evaluate_network(&current, data, &split.val, rule, "val", config.batch_size)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_precision: val.precision,
            val_recall: val.recall,
            val_f1: val.f1,
        });

        let improved = best.as_ref().map(|(f1, _, _)| val.f1 > *f1).unwrap_or(true);
        if improved {
            best = Some((val.f1, epoch, current.flat_params()));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= config.early_stop_patience {
                break;
            }
        }
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    let mut network = current;
    network.load_flat_params(&best_params)?;
    Ok(TrainOutcome {
        network,
        history,
        best_epoch,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreezePolicy {
    None,
    AllButHead,
}

impl std::str::FromStr for FreezePolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(FreezePolicy::None),
            "all_but_head" | "all-but-head" => Ok(FreezePolicy::AllButHead),
            other => Err(format!("unknown freeze policy {other:?}")),
        }
    }
}

/// Reuse a trained backbone for a new label space: every layer except the
/// final dense head keeps its parameters; the head is re-initialized at
/// `new_vocab_size` outputs. `AllButHead` additionally marks backbone
/// parameters non-trainable.
pub fn transfer(
    net: &Network,
    new_vocab_size: usize,
    freeze: FreezePolicy,
    seed: u64,
) -> Result<Network> {
    let mut out = net.clone();
    let head_index = out.layers.len().checked_sub(1).ok_or_else(|| {
        Error::IncompatibleBackbone("empty layer stack".into())
    })?;
    let in_dim = match out.layers.last() {
        Some(crate::layers::Layer::Dense(d)) => d.in_dim,
        other => {
            return Err(Error::IncompatibleBackbone(format!(
                "final layer must be dense, found {}",
                other.map(|l| l.kind_name()).unwrap_or("nothing")
            )))
        }
    };
    let mut rng = Rng::seed_from(seed);
    out.layers[head_index] =
        crate::layers::Layer::Dense(crate::layers::Dense::seeded(in_dim, new_vocab_size, &mut rng));
    for (i, layer) in out.layers.iter_mut().enumerate() {
        let trainable = match freeze {
            FreezePolicy::None => true,
            FreezePolicy::AllButHead => i == head_index,
        };
        layer.set_trainable(trainable);
    }
    Ok(out)
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything but the parameter payload.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub head: Head,
    pub layers: Vec<crate::layers::LayerSpec>,
    #[serde(default)]
    pub input_offset: f64,
    pub param_count: usize,
    pub vocab_fingerprint: String,
    pub provenance: Provenance,
}

/// Training provenance embedded in a checkpoint.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub config: Option<TrainConfig>,
    pub epoch: usize,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
}

impl Provenance {
    pub fn from_history(config: &TrainConfig, history: &[EpochRecord], best_epoch: usize) -> Self {
        let record = history.iter().find(|r| r.epoch == best_epoch);
        Provenance {
            config: Some(config.clone()),
            epoch: best_epoch,
            val_precision: record.map(|r| r.val_precision).unwrap_or(0.0),
            val_recall: record.map(|r| r.val_recall).unwrap_or(0.0),
            val_f1: record.map(|r| r.val_f1).unwrap_or(0.0),
        }
    }
}

/// Write `net` as one JSON header line followed by the little-endian f64
/// parameter payload. Round-trips bit-exactly.
pub fn save_checkpoint(
    path: &Path,
    net: &Network,
    vocab_fingerprint: &str,
    provenance: Provenance,
) -> Result<()> {
    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        head: net.head,
        layers: net.layer_specs(),
        input_offset: net.input_offset,
        param_count: net.param_count(),
        vocab_fingerprint: vocab_fingerprint.to_string(),
        provenance,
    };
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = std::io::BufWriter::new(file);
    let ctx = || format!("write {}", path.display());
    serde_json::to_writer(&mut w, &meta)?;
    w.write_all(b"\n").map_err(|e| Error::io(ctx(), e))?;
    for v in net.flat_params() {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointMeta)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut r = std::io::BufReader::new(file);
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r
            .read(&mut byte)
            .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if n == 0 {
            return Err(Error::TruncatedCheckpoint {
                expected: 1,
                found: 0,
            });
        }
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
    }
    let meta: CheckpointMeta = serde_json::from_slice(&header)?;
    if meta.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: meta.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)
        .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    let expected = meta.param_count * 8;
    if payload.len() != expected {
        return Err(Error::TruncatedCheckpoint {
            expected,
            found: payload.len(),
        });
    }
    let params: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut net = Network::from_specs(&meta.layers, meta.head, meta.input_offset);
    net.load_flat_params(&params)?;
    Ok((net, meta))
}

/// Write one JSON record per epoch.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::new();
    for record in history {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("write {}", path.display()), e))
}

/// Targets for a whole corpus keyed by id (used by baselines and reports).
pub fn corpus_targets(
    corpus: &Corpus,
    vocab: &Vocabulary,
    ids: &[String],
) -> Result<BTreeMap<String, TargetVector>> {
    ids.iter()
        .map(|id| Ok((id.clone(), corpus.target_for(id, vocab, true)?)))
        .collect()
}
