//! Contrastive objective over word pairs and its training loop.
//!
//! `L(y, d) = (1 − y)·α·d + y·max(0, m − d)` with `d` the Euclidean distance
//! between mean-pooled phrase embeddings; `y = 0` marks a similar pair.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::io;
use crate::optim::AdamW;
use crate::vocab::Vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    LInf,
}

impl Norm {
    pub fn of(self, v: &Array1<f64>) -> f64 {
        match self {
            Norm::L2 => v.dot(v).sqrt(),
            Norm::LInf => v.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
        }
    }
}

/// A line of a pair file before tokenization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPair {
    pub left: String,
    pub right: String,
    pub label: u8,
    pub line: usize,
}

/// Reads `left<TAB>right<TAB>label` records.
pub fn load_pairs(path: &Path) -> Result<Vec<RawPair>> {
    let text = io::read_text(path)?;
    let mut out = Vec::new();
    for (line, l) in io::data_lines(&text) {
        let loc = || format!("{}:{line}", path.display());
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                loc(),
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let label = match fields[2].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::parse(loc(), format!("label must be 0 or 1, got {other:?}"))),
        };
        out.push(RawPair {
            left: fields[0].trim().to_string(),
            right: fields[1].trim().to_string(),
            label,
            line,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPair {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    /// 0 = similar, 1 = dissimilar.
    pub label: u8,
}

impl WordPair {
    pub fn new(left: Vec<usize>, right: Vec<usize>, label: u8) -> Result<Self> {
        if left.is_empty() || right.is_empty() {
            return Err(Error::invalid("word pair sides must be nonempty"));
        }
        if label > 1 {
            return Err(Error::invalid(format!("pair label must be 0 or 1, got {label}")));
        }
        Ok(Self { left, right, label })
    }

    /// Tokenizes both sides; each must contain at least one known subword.
    pub fn from_text(vocab: &Vocab, left: &str, right: &str, label: u8) -> Result<Self> {
        let side = |text: &str| -> Result<Vec<usize>> {
            let ids = vocab.tokenize(text);
            if ids.iter().all(|&i| i == vocab.unk_id()) {
                return Err(Error::NotFound(format!(
                    "{text:?} has no known subword in the vocabulary"
                )));
            }
            Ok(ids)
        };
        Self::new(side(left)?, side(right)?, label)
    }

    pub fn from_raw(vocab: &Vocab, raw: &RawPair) -> Result<Self> {
        Self::from_text(vocab, &raw.left, &raw.right, raw.label)
    }
}

pub fn contrastive_loss(d: f64, y: u8, alpha: f64, margin: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::invalid(format!("distance must be nonnegative, got {d}")));
    }
    if y > 1 {
        return Err(Error::invalid(format!("label must be 0 or 1, got {y}")));
    }
    Ok(if y == 0 {
        alpha * d
    } else {
        (margin - d).max(0.0)
    })
}

pub fn pair_distance(table: &EmbeddingTable, pair: &WordPair, norm: Norm) -> Result<f64> {
    let diff = table.embed_phrase(&pair.left)? - table.embed_phrase(&pair.right)?;
    Ok(norm.of(&diff))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastiveConfig {
    pub alpha: f64,
    pub margin: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self::gender_phase()
    }
}

impl ContrastiveConfig {
    /// Clustering of gender-related terms: α = 1000, m = 1.0, 150 epochs.
    pub fn gender_phase() -> Self {
        Self {
            alpha: 1000.0,
            margin: 1.0,
            epochs: 150,
            learning_rate: 1e-3,
            batch_size: 128,
            seed: 0,
        }
    }

    /// General synonym/antonym phase: α = 1.0, 30 epochs, margin 0.5–0.8.
    pub fn general_phase(margin: f64) -> Self {
        Self {
            alpha: 1.0,
            margin,
            epochs: 30,
            ..Self::gender_phase()
        }
    }

    /// Toxic-term clustering: α = 20, m = 0.5, 100 epochs.
    pub fn toxicity_phase() -> Self {
        Self {
            alpha: 20.0,
            margin: 0.5,
            epochs: 100,
            ..Self::gender_phase()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid("alpha must be finite and nonnegative"));
        }
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return Err(Error::invalid("margin must be finite and positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Mean contrastive loss over `pairs` and its gradient with respect to the
/// whole weight matrix. At `d = 0` the distance gradient is taken as zero.
pub fn batch_loss_and_gradient(
    table: &EmbeddingTable,
    pairs: &[&WordPair],
    alpha: f64,
    margin: f64,
) -> Result<(f64, Array2<f64>)> {
    let mut grad = Array2::zeros(table.weights().raw_dim());
    if pairs.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / pairs.len() as f64;
    let mut total = 0.0;
    for p in pairs {
        let h1 = table.embed_phrase(&p.left)?;
        let h2 = table.embed_phrase(&p.right)?;
        let diff = &h1 - &h2;
        let d = diff.dot(&diff).sqrt();
        total += contrastive_loss(d, p.label, alpha, margin)?;
        let dl_dd = if p.label == 0 {
            alpha
        } else if d < margin {
            -1.0
        } else {
            0.0
        };
        if dl_dd == 0.0 || d == 0.0 {
            continue;
        }
        let g = diff * (dl_dd * scale / d);
        let wl = 1.0 / p.left.len() as f64;
        for &id in &p.left {
            grad.row_mut(id).scaled_add(wl, &g);
        }
        let wr = 1.0 / p.right.len() as f64;
        for &id in &p.right {
            grad.row_mut(id).scaled_add(-wr, &g);
        }
    }
    Ok((total * scale, grad))
}

/// Minibatch Adam on the contrastive objective. Returns the trained table
/// and the mean loss of each epoch.
pub fn train_embedding(
    pairs: &[WordPair],
    cfg: &ContrastiveConfig,
    table: EmbeddingTable,
) -> Result<(EmbeddingTable, Vec<f64>)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    for p in pairs {
        if p.left.iter().chain(&p.right).any(|&id| id >= table.vocab_size()) {
            return Err(Error::invalid("pair references a token id outside the table"));
        }
    }
    let mut table = table;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(cfg.learning_rate, 0.0);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&WordPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            let (loss, grad) = batch_loss_and_gradient(&table, &batch, cfg.alpha, cfg.margin)?;
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    stage: "epoch",
                    index: epoch,
                    msg: "contrastive loss is not finite".into(),
                });
            }
            epoch_loss += loss * batch.len() as f64;
            let w = table.weights_mut();
            opt.update(
                [w.as_slice_mut().expect("standard layout")],
                [grad.as_slice().expect("standard layout")],
            );
        }
        let mean = epoch_loss / pairs.len() as f64;
        if !mean.is_finite() || !table.weights().iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric {
                stage: "epoch",
                index: epoch,
                msg: "embedding weights diverged".into(),
            });
        }
        history.push(mean);
    }
    Ok((table, history))
}
