//! Training loop: focal loss, AdamW, plateau scheduler, early stopping.
//!
//! The embedding table is never touched; only block and head tensors are
//! handed to the optimizer.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::{argmax, softmax, ModelGrads};
use super::loss::{focal_loss_with_grad, FocalConfig};
use super::model::TransformerModel;
use crate::error::{Error, Result};
use crate::io;
use crate::optim::AdamW;
use crate::vocab::Vocab;

/// A dataset record before tokenization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawExample {
    pub label: usize,
    pub text: String,
    pub line: usize,
}

/// Tokenized, padded record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub ids: Vec<usize>,
    pub label: usize,
}

/// Reads `label<TAB>text` lines.
pub fn load_dataset(path: &Path) -> Result<Vec<RawExample>> {
    let text = io::read_text(path)?;
    parse_dataset(&text, &path.display().to_string())
}

pub fn parse_dataset(text: &str, origin: &str) -> Result<Vec<RawExample>> {
    let mut out = Vec::new();
    for (line, l) in io::data_lines(text) {
        let (label, body) = l.split_once('\t').ok_or_else(|| {
            Error::parse(format!("{origin}:{line}"), "expected label<TAB>text")
        })?;
        let label = label.trim().parse::<usize>().map_err(|_| {
            Error::parse(format!("{origin}:{line}"), format!("bad label {label:?}"))
        })?;
        out.push(RawExample {
            label,
            text: body.to_string(),
            line,
        });
    }
    Ok(out)
}

pub fn encode_dataset(vocab: &Vocab, raw: &[RawExample], max_seq: usize) -> Vec<Example> {
    raw.iter()
        .map(|r| Example {
            ids: vocab.encode(&r.text, max_seq),
            label: r.label,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub min_delta: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 3,
            min_lr: 1e-6,
            min_delta: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EarlyStopConfig {
    pub patience: usize,
    pub restore_best: bool,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self {
            patience: 10,
            restore_best: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub plateau: PlateauConfig,
    pub early_stop: EarlyStopConfig,
    pub focal: FocalConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            plateau: PlateauConfig::default(),
            early_stop: EarlyStopConfig::default(),
            focal: FocalConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.plateau;
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.weight_decay >= 0.0
            && p.factor > 0.0
            && p.factor < 1.0
            && p.patience > 0
            && p.min_lr >= 0.0
            && p.min_delta >= 0.0
            && self.early_stop.patience > 0
            && self.focal.alpha > 0.0
            && self.focal.gamma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid training configuration {self:?}")))
        }
    }
}

/// Reduce-on-plateau on a monitored loss.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    cfg: PlateauConfig,
    best: f64,
    wait: usize,
    lr: f64,
}

impl PlateauScheduler {
    pub fn new(learning_rate: f64, cfg: PlateauConfig) -> Self {
        Self {
            cfg,
            best: f64::INFINITY,
            wait: 0,
            lr: learning_rate,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's monitored value and returns the rate to use next.
    pub fn observe(&mut self, value: f64) -> f64 {
        if value < self.best - self.cfg.min_delta {
            self.best = value;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.cfg.patience {
                if self.lr > self.cfg.min_lr {
                    self.lr = (self.lr * self.cfg.factor).max(self.cfg.min_lr);
                }
                self.wait = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Mean focal loss over `batch` and its gradient. With `rng` the forward
/// pass runs in training mode (dropout active).
pub fn loss_and_gradient(
    model: &TransformerModel,
    batch: &[&Example],
    focal: FocalConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, ModelGrads)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut grads = ModelGrads::zeros_like(model);
    let mut total = 0.0;
    for ex in batch {
        check_label(model, ex)?;
        let trace = model.trace(&ex.ids, rng.as_deref_mut())?;
        let probs = softmax(trace.logits.as_slice().unwrap());
        let (loss, dz) = focal_loss_with_grad(&probs, ex.label, focal)?;
        total += loss;
        model.backward(&trace, &dz, &mut grads);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((total / n, grads))
}

fn check_label(model: &TransformerModel, ex: &Example) -> Result<()> {
    if ex.label >= model.hyper.num_classes {
        return Err(Error::invalid(format!(
            "label {} out of range for {} classes",
            ex.label, model.hyper.num_classes
        )));
    }
    Ok(())
}

/// Mean focal loss and accuracy in inference mode.
pub fn evaluate(model: &TransformerModel, set: &[Example], focal: FocalConfig) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in set {
        check_label(model, ex)?;
        let logits = model.logits(&ex.ids)?;
        let probs = softmax(logits.as_slice().unwrap());
        loss += super::loss::focal_loss(&probs, ex.label, focal.alpha, focal.gamma)?;
        if argmax(&probs) == ex.label {
            correct += 1;
        }
    }
    let n = set.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains block and head parameters; the embedding stays bit-identical.
pub fn train_model(
    mut model: TransformerModel,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
) -> Result<(TransformerModel, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }
    if !model.is_frozen() {
        return Err(Error::invalid("embedding must be frozen"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(cfg.learning_rate, cfg.weight_decay);
    let mut sched = PlateauScheduler::new(cfg.learning_rate, cfg.plateau);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut wait = 0usize;
    let mut stopped_early = false;
    let mut batch_index = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = loss_and_gradient(&model, &batch, cfg.focal, Some(&mut rng))?;
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    stage: "batch",
                    index: batch_index,
                    msg: format!("training loss is {loss}"),
                });
            }
            opt.update(model.tensors_mut(), grads.tensors());
            sum += loss * batch.len() as f64;
            batch_index += 1;
        }
        let (val_loss, val_accuracy) = evaluate(&model, val, cfg.focal)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric {
                stage: "epoch",
                index: epoch,
                msg: format!("validation loss is {val_loss}"),
            });
        }
        records.push(EpochRecord {
            epoch,
            train_loss: sum / train.len() as f64,
            val_loss,
            val_accuracy,
            learning_rate: opt.learning_rate,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, model.clone());
            wait = 0;
        } else {
            wait += 1;
        }
        opt.learning_rate = sched.observe(val_loss);
        if wait >= cfg.early_stop.patience {
            stopped_early = true;
            break;
        }
    }
    let (best_val_loss, best_epoch, best_model) = best;
    if cfg.early_stop.restore_best {
        model = best_model;
    }
    Ok((
        model,
        TrainHistory {
            epochs: records,
            best_epoch,
            best_val_loss,
            stopped_early,
        },
    ))
}
