//! Word embedding table, contrastive pre-training, and distance analytics.

mod contrastive;
mod neighbors;

pub use contrastive::{
    batch_loss_and_gradient, contrastive_loss, load_pairs, pair_distance, train_embedding,
    ContrastiveConfig, Norm, RawPair, WordPair,
};
pub use neighbors::{nearest_neighbors, NeighborSet};

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::vocab::{Vocab, PAD_ID};

/// Half-width of the uniform initialization interval.
pub const INIT_SCALE: f64 = 0.05;

const TABLE_FORMAT: &str = "zonofair.embedding-table";
const TABLE_VERSION: u32 = 1;

/// Vocabulary-indexed matrix of `dim`-dimensional vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocab,
    weights: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct TableFile {
    format: String,
    version: u32,
    dim: usize,
    vocab: Vocab,
    /// Row-major `vocab.len() × dim`.
    weights: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(vocab: Vocab, weights: Array2<f64>) -> Result<Self> {
        if weights.nrows() != vocab.len() {
            return Err(Error::Schema(format!(
                "embedding table has {} rows for {} vocabulary entries",
                weights.nrows(),
                vocab.len()
            )));
        }
        if weights.ncols() == 0 {
            return Err(Error::Schema("embedding dimension must be positive".into()));
        }
        if !weights.iter().all(|v| v.is_finite()) {
            return Err(Error::Schema("embedding weights must be finite".into()));
        }
        Ok(Self { vocab, weights })
    }

    /// Uniform `(-0.05, 0.05)` initialization with a zero PAD row.
    pub fn random(vocab: Vocab, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights =
            Array2::from_shape_fn((vocab.len(), dim), |_| rng.random_range(-INIT_SCALE..INIT_SCALE));
        weights.row_mut(PAD_ID).fill(0.0);
        Self::new(vocab, weights)
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Array2<f64> {
        &mut self.weights
    }

    pub fn row(&self, id: usize) -> ArrayView1<'_, f64> {
        self.weights.row(id)
    }

    pub fn id(&self, token: &str) -> Result<usize> {
        self.vocab
            .id(token)
            .ok_or_else(|| Error::NotFound(format!("token {token:?} is not in the vocabulary")))
    }

    /// Mean of the rows of `ids`.
    pub fn embed_phrase(&self, ids: &[usize]) -> Result<Array1<f64>> {
        if ids.is_empty() {
            return Err(Error::invalid("cannot embed an empty token sequence"));
        }
        let mut acc = Array1::zeros(self.dim());
        for &id in ids {
            if id >= self.vocab_size() {
                return Err(Error::invalid(format!("token id {id} out of range")));
            }
            acc += &self.weights.row(id);
        }
        Ok(acc / ids.len() as f64)
    }

    /// `(inf, sup)` over all weights.
    pub fn value_bounds(&self) -> (f64, f64) {
        self.weights
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub(crate) fn to_file(&self) -> TableFile {
        TableFile {
            format: TABLE_FORMAT.into(),
            version: TABLE_VERSION,
            dim: self.dim(),
            vocab: self.vocab.clone(),
            weights: self.weights.iter().copied().collect(),
        }
    }

    pub(crate) fn from_file(f: TableFile) -> Result<Self> {
        if f.format != TABLE_FORMAT {
            return Err(Error::Schema(format!(
                "expected format {TABLE_FORMAT:?}, found {:?}",
                f.format
            )));
        }
        if f.version != TABLE_VERSION {
            return Err(Error::Schema(format!(
                "unsupported embedding table version {}",
                f.version
            )));
        }
        if f.dim == 0 || f.weights.len() != f.vocab.len() * f.dim {
            return Err(Error::Schema(format!(
                "{} weights do not form a {}x{} table",
                f.weights.len(),
                f.vocab.len(),
                f.dim
            )));
        }
        let weights = Array2::from_shape_vec((f.vocab.len(), f.dim), f.weights)
            .map_err(|e| Error::Schema(e.to_string()))?;
        Self::new(f.vocab, weights)
    }

    pub fn to_json(&self) -> String {
        io::to_json_string(&self.to_file())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(io::from_json_str(text, "<embedding table>")?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_file())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(io::read_json(path)?)
    }
}
