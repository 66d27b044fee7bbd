//! Multilayer perceptron over concatenated utterance embeddings.
//!
//! Hidden layers use ReLU; the head emits softmax probabilities over either
//! the binary classes `[bonafide, spoof]` or the four-way classes in head
//! index order. Training minimizes mean cross-entropy with AdamW and keeps
//! the parameters from the epoch with the lowest validation loss.
//!
//! All arithmetic is `f64`. Initialization draws each weight uniformly from
//! `[-1/sqrt(fan_in), 1/sqrt(fan_in))` using [`SeededRng::symmetric`], layer by
//! layer, row-major; biases start at zero.

use std::io::{self, BufRead, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::FourWayLabel;
use crate::embeddings::EmbeddingSet;
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid layer dimensions: {0}")]
    BadDims(String),
    #[error("input has dimension {found}, model expects {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("binary head must have class order [bonafide, spoof]")]
    WrongClassOrder,
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("label {label} out of range for {n_classes} classes")]
    BadLabel { label: usize, n_classes: usize },
    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("score table: {0}")]
    BadScores(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassOrder {
    /// `[bonafide, spoof]`
    Binary,
    /// `[bonafide, processed_bonafide, spoof, processed_spoof]`
    FourWay,
}

impl ClassOrder {
    pub fn n_classes(self) -> usize {
        match self {
            ClassOrder::Binary => 2,
            ClassOrder::FourWay => 4,
        }
    }

    pub fn from_n_classes(n: usize) -> Option<Self> {
        match n {
            2 => Some(ClassOrder::Binary),
            4 => Some(ClassOrder::FourWay),
            _ => None,
        }
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            ClassOrder::Binary => &["bonafide", "spoof"],
            ClassOrder::FourWay => &["bonafide", "processed_bonafide", "spoof", "processed_spoof"],
        }
    }

    /// Training target for a four-way label under this class order.
    pub fn target(self, label: FourWayLabel) -> usize {
        match self {
            ClassOrder::Binary => label.source().index(),
            ClassOrder::FourWay => label.index(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim x in_dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.in_dim).zip(&self.bias).map(|(row, b)| {
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.in_dim..(r + 1) * self.in_dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub class_order: ClassOrder,
    pub seed: u64,
}

pub fn init_mlp(input_dim: usize, hidden_dims: &[usize], n_classes: usize, seed: u64) -> Result<MlpModel, ClassifierError> {
    let class_order = ClassOrder::from_n_classes(n_classes)
        .ok_or_else(|| ClassifierError::BadDims(format!("{n_classes} classes; only 2 or 4 supported")))?;
    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden_dims);
    dims.push(n_classes);
    if dims.contains(&0) {
        return Err(ClassifierError::BadDims(format!("{dims:?} contains a zero")));
    }
    let mut rng = SeededRng::new(seed);
    let layers = dims
        .windows(2)
        .map(|w| {
            let mut layer = Layer::zeros(w[0], w[1]);
            let bound = 1.0 / (w[0] as f64).sqrt();
            layer.weights.iter_mut().for_each(|x| *x = rng.symmetric(bound));
            layer
        })
        .collect();
    Ok(MlpModel { layers, class_order, seed })
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits[k] - lse
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        if x.len() != self.input_dim() {
            return Err(ClassifierError::DimMismatch { expected: self.input_dim(), found: x.len() });
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        Ok(softmax(&self.logits(x)?))
    }
}

/// Argmax with ties going to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Expand a binary head `(W: 2 x H, b: 2)` to four classes: row 0 keeps the
/// bona fide weights, rows 1-3 copy the spoof row.
pub fn expand_binary_head(weights: &[f64], bias: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ClassifierError> {
    if bias.len() != 2 || !weights.len().is_multiple_of(2) {
        return Err(ClassifierError::BadDims("binary head must have exactly two rows".into()));
    }
    let h = weights.len() / 2;
    let (bona, spoof) = weights.split_at(h);
    let mut w4 = Vec::with_capacity(4 * h);
    w4.extend_from_slice(bona);
    for _ in 0..3 {
        w4.extend_from_slice(spoof);
    }
    Ok((w4, vec![bias[0], bias[1], bias[1], bias[1]]))
}

/// Four-way model initialized from a binary one via [`expand_binary_head`].
pub fn expand_to_four_way(binary: &MlpModel) -> Result<MlpModel, ClassifierError> {
    if binary.class_order != ClassOrder::Binary {
        return Err(ClassifierError::WrongClassOrder);
    }
    let mut model = binary.clone();
    let head = model.layers.last_mut().expect("model has at least one layer");
    let (w, b) = expand_binary_head(&head.weights, &head.bias)?;
    head.weights = w;
    head.bias = b;
    head.out_dim = 4;
    model.class_order = ClassOrder::FourWay;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    /// Step size used when continuing from a checkpoint with the same head.
    pub reduced_lr: f64,
    /// Inverse-frequency class weights in the training loss.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-2,
            epochs: 20,
            batch_size: 64,
            patience: 8,
            seed: 0,
            reduced_lr: 5e-5,
            class_weighting: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::BadConfig("learning_rate must be finite and non-negative".into()));
        }
        if self.epochs == 0 {
            return Err(ClassifierError::BadConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ClassifierError::BadConfig("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Embeddings with one class index per entry, aligned with `emb` order.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub emb: EmbeddingSet,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(emb: EmbeddingSet, labels: Vec<usize>) -> Result<Self, ClassifierError> {
        if emb.len() != labels.len() {
            return Err(ClassifierError::BadDims(format!("{} embeddings but {} labels", emb.len(), labels.len())));
        }
        Ok(Self { emb, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn rows(&self) -> Vec<&[f64]> {
        self.emb.iter().map(|(_, v)| v).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Gradients with the same layout as the model layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Self { layers: model.layers.iter().map(|l| Layer::zeros(l.in_dim, l.out_dim)).collect() }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }
}

/// Mean (optionally class-weighted) cross-entropy over a batch.
pub fn batch_loss(model: &MlpModel, xs: &[&[f64]], ys: &[usize], class_weights: Option<&[f64]>) -> f64 {
    let mut total = 0.0;
    let mut norm = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let w = class_weights.map_or(1.0, |cw| cw[y]);
        let logits = model.logits(x).expect("dims checked by caller");
        total -= w * log_softmax_at(&logits, y);
        norm += w;
    }
    total / norm
}

/// Loss and analytic gradient of [`batch_loss`] by backpropagation.
pub fn batch_gradients(model: &MlpModel, xs: &[&[f64]], ys: &[usize], class_weights: Option<&[f64]>) -> (f64, Gradients) {
    let mut grads = Gradients::zeros_like(model);
    let n_layers = model.layers.len();
    let norm: f64 = ys.iter().map(|&y| class_weights.map_or(1.0, |cw| cw[y])).sum();
    let mut total = 0.0;
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
    for (x, &y) in xs.iter().zip(ys) {
        let w = class_weights.map_or(1.0, |cw| cw[y]) / norm;
        acts.clear();
        acts.push(x.to_vec());
        for (i, layer) in model.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.apply(&acts[i], &mut out);
            if i + 1 < n_layers {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        let logits = &acts[n_layers];
        total -= w * log_softmax_at(logits, y);
        let mut delta = softmax(logits);
        delta[y] -= 1.0;
        delta.iter_mut().for_each(|d| *d *= w);
        for i in (0..n_layers).rev() {
            let layer = &model.layers[i];
            let g = &mut grads.layers[i];
            let input = &acts[i];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[r] += d;
                let row = &mut g.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (gw, a) in row.iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.in_dim];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, wv) in prev.iter_mut().zip(layer.row(r)) {
                    *p += d * wv;
                }
            }
            // ReLU derivative on the previous hidden activation
            for (p, a) in prev.iter_mut().zip(&acts[i]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    (total, grads)
}

/// Decoupled-weight-decay Adam (β1 0.9, β2 0.999, ε 1e-8). Each step first
/// scales parameters by `1 - lr * weight_decay`, then applies the
/// bias-corrected Adam update.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(n_params: usize, lr: f64, weight_decay: f64) -> Self {
        Self { lr, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let decay = 1.0 - self.lr * self.weight_decay;
        let g_iter = grads.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias));
        for (((p, g), m), v) in model.parameters_mut().zip(g_iter).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p *= decay;
            *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

fn inverse_frequency_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        counts[y] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { labels.len() as f64 / (present * c as f64) })
        .collect()
}

fn check_set(model: &MlpModel, set: &LabeledSet, name: &'static str) -> Result<(), ClassifierError> {
    if set.is_empty() {
        return Err(ClassifierError::EmptySplit(name));
    }
    if set.emb.dim() != model.input_dim() {
        return Err(ClassifierError::DimMismatch { expected: model.input_dim(), found: set.emb.dim() });
    }
    let n_classes = model.n_classes();
    if let Some(&label) = set.labels.iter().find(|&&y| y >= n_classes) {
        return Err(ClassifierError::BadLabel { label, n_classes });
    }
    Ok(())
}

/// Train with AdamW at `cfg.learning_rate`; see [`train_with_lr`].
pub fn train(model: &MlpModel, train_set: &LabeledSet, val_set: &LabeledSet, cfg: &TrainConfig) -> Result<(MlpModel, TrainLog), ClassifierError> {
    train_with_lr(model, train_set, val_set, cfg, cfg.learning_rate)
}

/// Mini-batch training. The training order is reshuffled every epoch from a
/// generator seeded with `cfg.seed`; validation loss is evaluated after each
/// epoch and the best-scoring parameters are returned.
pub fn train_with_lr(
    model: &MlpModel,
    train_set: &LabeledSet,
    val_set: &LabeledSet,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<(MlpModel, TrainLog), ClassifierError> {
    let cfg = TrainConfig { learning_rate: lr, ..cfg.clone() };
    cfg.validate()?;
    check_set(model, train_set, "train")?;
    check_set(model, val_set, "validation")?;

    let class_weights = cfg.class_weighting.then(|| inverse_frequency_weights(&train_set.labels, model.n_classes()));
    let train_rows = train_set.rows();
    let val_rows = val_set.rows();
    let mut current = model.clone();
    let mut opt = AdamW::new(model.parameter_count(), lr, cfg.weight_decay);
    let mut rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = (current.clone(), f64::INFINITY, 0usize);
    let mut log = TrainLog { epochs: Vec::new(), best_epoch: 0, best_val_loss: f64::INFINITY, stopped_early: false };
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train_rows[i]).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            let (loss, grads) = batch_gradients(&current, &xs, &ys, class_weights.as_deref());
            if !loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss(epoch));
            }
            loss_sum += loss * batch.len() as f64;
            opt.step(&mut current, &grads);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = batch_loss(&current, &val_rows, &val_set.labels, None);
        if !val_loss.is_finite() {
            return Err(ClassifierError::NonFiniteLoss(epoch));
        }
        log.epochs.push(EpochLog { epoch, train_loss, val_loss });
        if val_loss < best.1 {
            best = (current.clone(), val_loss, epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                log.stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }
    log.best_epoch = best.2;
    log.best_val_loss = best.1;
    Ok((best.0, log))
}

/// Per-utterance class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub class_order: ClassOrder,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl ScoreTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = self.class_order.class_names().iter().map(|c| format!("p_{c}")).collect();
        writeln!(w, "utt_id,{}", header.join(","))?;
        for (id, row) in &self.rows {
            let vals: Vec<String> = row.iter().map(|p| format!("{p:?}")).collect();
            writeln!(w, "{id},{}", vals.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, ClassifierError> {
        let bad = |m: String| ClassifierError::BadScores(m);
        let mut lines = io::BufReader::new(r).lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.first() != Some(&"utt_id") {
            return Err(bad("first column must be utt_id".into()));
        }
        let class_order = [ClassOrder::Binary, ClassOrder::FourWay]
            .into_iter()
            .find(|o| {
                let names: Vec<String> = o.class_names().iter().map(|c| format!("p_{c}")).collect();
                cols[1..].iter().copied().eq(names.iter().map(String::as_str))
            })
            .ok_or_else(|| bad(format!("unrecognized class columns {:?}", &cols[1..])))?;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.trim_end().split(',');
            let id = fields.next().unwrap_or_default().to_string();
            let probs = fields
                .map(|f| f.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", i + 2))))
                .collect::<Result<Vec<_>, _>>()?;
            if probs.len() != class_order.n_classes() {
                return Err(bad(format!("line {}: expected {} probabilities", i + 2, class_order.n_classes())));
            }
            let sum: f64 = probs.iter().sum();
            if probs.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > 1e-6 {
                return Err(bad(format!("line {}: row is not a probability vector", i + 2)));
            }
            rows.push((id, probs));
        }
        Ok(Self { class_order, rows })
    }
}

pub fn predict_scores(model: &MlpModel, emb: &EmbeddingSet) -> Result<ScoreTable, ClassifierError> {
    if !emb.is_empty() && emb.dim() != model.input_dim() {
        return Err(ClassifierError::DimMismatch { expected: model.input_dim(), found: emb.dim() });
    }
    let entries: Vec<(&str, &[f64])> = emb.iter().collect();
    let rows = entries
        .par_iter()
        .map(|(id, v)| Ok((id.to_string(), model.forward(v)?)))
        .collect::<Result<Vec<_>, ClassifierError>>()?;
    Ok(ScoreTable { class_order: model.class_order, rows })
}

const CKPT_MAGIC: &[u8; 4] = b"MLP1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub layer_dims: Vec<usize>,
    pub class_order: Vec<String>,
    pub seed: u64,
    pub config: Option<TrainConfig>,
}

/// Checkpoint layout: `"MLP1"`, u32 LE header length, JSON header, then every
/// parameter as f64 LE in layer order (weights row-major, then biases).
pub fn write_checkpoint<W: Write>(mut w: W, model: &MlpModel, config: Option<&TrainConfig>) -> Result<(), ClassifierError> {
    let header = CheckpointHeader {
        layer_dims: model.layer_dims(),
        class_order: model.class_order.class_names().iter().map(|s| s.to_string()).collect(),
        seed: model.seed,
        config: config.cloned(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ClassifierError::BadCheckpoint(e.to_string()))?;
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(8 * model.parameter_count());
    for p in model.parameters() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(MlpModel, CheckpointHeader), ClassifierError> {
    let bad = |m: &str| ClassifierError::BadCheckpoint(m.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != CKPT_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&json).map_err(|e| ClassifierError::BadCheckpoint(e.to_string()))?;
    let dims = &header.layer_dims;
    if dims.len() < 2 || dims.contains(&0) {
        return Err(bad("invalid layer dims"));
    }
    let n_classes = *dims.last().expect("len checked");
    let class_order = ClassOrder::from_n_classes(n_classes).ok_or_else(|| bad("unsupported class count"))?;
    if header.class_order.iter().map(String::as_str).ne(class_order.class_names().iter().copied()) {
        return Err(bad("class order does not match head size"));
    }
    let mut model = MlpModel {
        layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        class_order,
        seed: header.seed,
    };
    let mut blob = vec![0u8; 8 * model.parameter_count()];
    r.read_exact(&mut blob).map_err(|_| bad("truncated parameters"))?;
    for (p, chunk) in model.parameters_mut().zip(blob.chunks_exact(8)) {
        *p = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        if !p.is_finite() {
            return Err(bad("non-finite parameter"));
        }
    }
    Ok((model, header))
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &MlpModel, config: Option<&TrainConfig>) -> Result<(), ClassifierError> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut w, model, config)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(MlpModel, CheckpointHeader), ClassifierError> {
    read_checkpoint(io::BufReader::new(std::fs::File::open(path)?))
}
