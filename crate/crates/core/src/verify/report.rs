//! Threshold `D`, per-sentence records, Ψ, and their file formats.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{certified, max_verifiable_radius, PropagationConfig, RadiusResult, SearchConfig};
use crate::embed::{nearest_neighbors, EmbeddingTable};
use crate::error::{Error, Result};
use crate::io;
use crate::lm::{argmax, TransformerModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorThreshold {
    pub anchor: String,
    pub max_distance: f64,
    pub neighbors: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub k: usize,
    pub anchors: Vec<AnchorThreshold>,
    /// Maximum of the per-anchor entries.
    pub threshold: f64,
}

/// `D` = largest ℓ∞ distance from any anchor to one of its `k` nearest
/// neighbors.
pub fn compute_threshold(table: &EmbeddingTable, anchors: &[String], k: usize) -> Result<ThresholdReport> {
    if anchors.is_empty() {
        return Err(Error::invalid("at least one anchor is required"));
    }
    let mut rows = Vec::with_capacity(anchors.len());
    for a in anchors {
        let set = nearest_neighbors(table, a, k)?;
        rows.push(AnchorThreshold {
            anchor: a.clone(),
            max_distance: set.max_distance(),
            neighbors: set.neighbors,
        });
    }
    let threshold = rows.iter().map(|r| r.max_distance).fold(f64::NEG_INFINITY, f64::max);
    Ok(ThresholdReport {
        k,
        anchors: rows,
        threshold,
    })
}

/// `Ψ = (number certified) / N`.
pub fn fairness_score(flags: &[bool]) -> Result<f64> {
    if flags.is_empty() {
        return Err(Error::invalid("fairness score of an empty sentence list"));
    }
    let hits = flags.iter().filter(|&&f| f).count();
    Ok(hits as f64 / flags.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub index: usize,
    pub tokens: Vec<String>,
    pub eps_max: f64,
    pub threshold_d: f64,
    pub certified: bool,
    /// `logit_pred − max rival logit` of the unperturbed sentence.
    pub margin_at_zero: Option<f64>,
    pub cap_hit: bool,
    pub unverifiable: bool,
    /// Engine failure for this sentence; the record then counts as uncertified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SentenceRecord {
    /// Record for an externally obtained radius.
    pub fn from_radius(index: usize, eps_max: f64, threshold_d: f64) -> Self {
        Self {
            index,
            tokens: Vec::new(),
            eps_max,
            threshold_d,
            certified: certified(eps_max, threshold_d),
            margin_at_zero: None,
            cap_hit: false,
            unverifiable: false,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub n: usize,
    pub threshold_d: f64,
    pub psi: f64,
    pub sentences: Vec<SentenceRecord>,
}

impl FairnessReport {
    pub fn from_records(threshold_d: f64, sentences: Vec<SentenceRecord>) -> Result<Self> {
        let flags: Vec<bool> = sentences.iter().map(|s| s.certified).collect();
        let psi = fairness_score(&flags)?;
        Ok(Self {
            n: sentences.len(),
            threshold_d,
            psi,
            sentences,
        })
    }

    pub fn to_json(&self) -> String {
        io::to_json_string(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

/// Which token positions of each sentence are perturbed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PositionSelection {
    #[default]
    All,
    /// The first `n` non-PAD positions (all of them if fewer).
    FirstN(usize),
    /// Explicit token indices; each must be a non-PAD position.
    Explicit(Vec<usize>),
}

impl PositionSelection {
    pub fn resolve(&self, ids: &[usize]) -> Option<Vec<usize>> {
        match self {
            PositionSelection::All => None,
            PositionSelection::FirstN(n) => Some(
                TransformerModel::active_positions(ids)
                    .into_iter()
                    .take(*n)
                    .collect(),
            ),
            PositionSelection::Explicit(v) => Some(v.clone()),
        }
    }
}

/// Radius search for every sentence in parallel; records keep input order.
pub fn certify_corpus(
    model: &TransformerModel,
    sentences: &[Vec<usize>],
    threshold_d: f64,
    positions: &PositionSelection,
    search: &SearchConfig,
    cfg: &PropagationConfig,
) -> Result<FairnessReport> {
    if !(threshold_d >= 0.0) {
        return Err(Error::invalid(format!("threshold must be nonnegative, got {threshold_d}")));
    }
    search.validate()?;
    let vocab = model.embedding().vocab();
    let records: Vec<SentenceRecord> = sentences
        .par_iter()
        .enumerate()
        .map(|(index, ids)| {
            let tokens = vocab.decode(ids);
            let run = || -> Result<(RadiusResult, f64)> {
                let pos = positions.resolve(ids);
                let r = max_verifiable_radius(model, ids, pos.as_deref(), search, cfg)?;
                let logits = model.logits(ids)?;
                let l = logits.as_slice().unwrap();
                let pred = argmax(l);
                let rival = l
                    .iter()
                    .enumerate()
                    .filter(|&(c, _)| c != pred)
                    .map(|(_, &v)| v)
                    .fold(f64::NEG_INFINITY, f64::max);
                Ok((r, l[pred] - rival))
            };
            match run() {
                Ok((r, margin)) => SentenceRecord {
                    index,
                    tokens,
                    eps_max: r.eps_max,
                    threshold_d,
                    certified: certified(r.eps_max, threshold_d),
                    margin_at_zero: Some(margin),
                    cap_hit: r.cap_hit,
                    unverifiable: r.unverifiable,
                    error: None,
                },
                Err(e) => SentenceRecord {
                    tokens,
                    error: Some(e.to_string()),
                    certified: false,
                    ..SentenceRecord::from_radius(index, 0.0, threshold_d)
                },
            }
        })
        .collect();
    FairnessReport::from_records(threshold_d, records)
}

/// `sentence_index,eps_max,threshold_D,certified` rows.
pub fn radar_csv(report: &FairnessReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv encoding failed: {e}"));
    w.write_record(["sentence_index", "eps_max", "threshold_D", "certified"])
        .map_err(csv_err)?;
    for s in &report.sentences {
        w.write_record([
            s.index.to_string(),
            format!("{:e}", s.eps_max),
            format!("{:e}", s.threshold_d),
            s.certified.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub fn write_radar_csv(report: &FairnessReport, path: &Path) -> Result<()> {
    io::write_text(path, &radar_csv(report)?)
}
