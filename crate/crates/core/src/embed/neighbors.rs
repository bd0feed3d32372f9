//! ℓ∞ nearest neighbors in an embedding table.

use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, Norm};
use crate::error::{Error, Result};
use crate::vocab::{PAD_TOKEN, UNK_TOKEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub anchor: String,
    /// `(token, ℓ∞ distance)`, ascending by distance then vocabulary index.
    pub neighbors: Vec<(String, f64)>,
}

impl NeighborSet {
    pub fn max_distance(&self) -> f64 {
        self.neighbors.iter().map(|(_, d)| *d).fold(0.0, f64::max)
    }
}

/// The `k` tokens closest to `anchor` in ℓ∞. The anchor and the
/// PAD/UNK rows are never candidates.
pub fn nearest_neighbors(table: &EmbeddingTable, anchor: &str, k: usize) -> Result<NeighborSet> {
    let a = table.id(anchor)?;
    let vocab = table.vocab();
    let skip = |i: usize| {
        i == a || matches!(vocab.token(i), Some(t) if t == PAD_TOKEN || t == UNK_TOKEN)
    };
    let candidates = (0..table.vocab_size()).filter(|&i| !skip(i)).count();
    if k == 0 || k > candidates {
        return Err(Error::invalid(format!(
            "k = {k} neighbors requested but only {candidates} candidates exist"
        )));
    }
    let anchor_row = table.row(a);
    let mut scored: Vec<(f64, usize)> = (0..table.vocab_size())
        .filter(|&i| !skip(i))
        .map(|i| (Norm::LInf.of(&(&table.row(i) - &anchor_row)), i))
        .collect();
    scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    scored.truncate(k);
    Ok(NeighborSet {
        anchor: anchor.to_string(),
        neighbors: scored
            .into_iter()
            .map(|(d, i)| (vocab.token(i).unwrap().to_string(), d))
            .collect(),
    })
}
