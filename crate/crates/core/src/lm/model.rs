//! Transformer encoder classifier: parameters and shapes.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub blocks: usize,
    pub max_seq: usize,
    pub dropout: f64,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_eps: f64,
}

fn default_classes() -> usize {
    2
}

fn default_ln_eps() -> f64 {
    1e-6
}

impl Default for Hyperparams {
    /// Desk-scale setting: d = 8, 2 heads, FF 8, 2 blocks, 24 tokens.
    fn default() -> Self {
        Self {
            dim: 8,
            heads: 2,
            ff_dim: 8,
            blocks: 2,
            max_seq: 24,
            dropout: 0.1,
            num_classes: default_classes(),
            layer_norm_eps: default_ln_eps(),
        }
    }
}

impl Hyperparams {
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.ff_dim == 0 || self.max_seq == 0 {
            return Err(Error::invalid(
                "dim, heads, ff_dim and max_seq must be positive",
            ));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::invalid(format!(
                "dim {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("at least two classes are required"));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(Error::invalid("layer norm epsilon must be positive"));
        }
        Ok(())
    }
}

/// Post-norm encoder block. Weight matrices are `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln1_gamma: Array1<f64>,
    pub ln1_beta: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub ln2_gamma: Array1<f64>,
    pub ln2_beta: Array1<f64>,
}

/// Dense readout from the mean-pooled representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

fn glorot(rng: &mut ChaCha8Rng, out: usize, inp: usize) -> Array2<f64> {
    let limit = (6.0 / (out + inp) as f64).sqrt();
    Array2::from_shape_fn((out, inp), |_| rng.random_range(-limit..limit))
}

impl EncoderBlock {
    pub fn zeros(dim: usize, ff_dim: usize) -> Self {
        let m = |r, c| Array2::zeros((r, c));
        let v = |n| Array1::zeros(n);
        Self {
            wq: m(dim, dim),
            bq: v(dim),
            wk: m(dim, dim),
            bk: v(dim),
            wv: m(dim, dim),
            bv: v(dim),
            wo: m(dim, dim),
            bo: v(dim),
            ln1_gamma: v(dim),
            ln1_beta: v(dim),
            w1: m(ff_dim, dim),
            b1: v(ff_dim),
            w2: m(dim, ff_dim),
            b2: v(dim),
            ln2_gamma: v(dim),
            ln2_beta: v(dim),
        }
    }

    pub(crate) fn init(dim: usize, ff_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut b = Self::zeros(dim, ff_dim);
        b.wq = glorot(rng, dim, dim);
        b.wk = glorot(rng, dim, dim);
        b.wv = glorot(rng, dim, dim);
        b.wo = glorot(rng, dim, dim);
        b.w1 = glorot(rng, ff_dim, dim);
        b.w2 = glorot(rng, dim, ff_dim);
        b.ln1_gamma.fill(1.0);
        b.ln2_gamma.fill(1.0);
        b
    }

    pub const TENSOR_NAMES: [&'static str; 16] = [
        "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_gamma", "ln1_beta", "w1", "b1",
        "w2", "b2", "ln2_gamma", "ln2_beta",
    ];

    pub fn shapes(dim: usize, ff_dim: usize) -> [Vec<usize>; 16] {
        let (d, f) = (dim, ff_dim);
        [
            vec![d, d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d],
            vec![d],
            vec![f, d],
            vec![f],
            vec![d, f],
            vec![d],
            vec![d],
            vec![d],
        ]
    }

    pub fn tensors(&self) -> [&[f64]; 16] {
        [
            self.wq.as_slice().unwrap(),
            self.bq.as_slice().unwrap(),
            self.wk.as_slice().unwrap(),
            self.bk.as_slice().unwrap(),
            self.wv.as_slice().unwrap(),
            self.bv.as_slice().unwrap(),
            self.wo.as_slice().unwrap(),
            self.bo.as_slice().unwrap(),
            self.ln1_gamma.as_slice().unwrap(),
            self.ln1_beta.as_slice().unwrap(),
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
            self.ln2_gamma.as_slice().unwrap(),
            self.ln2_beta.as_slice().unwrap(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 16] {
        [
            self.wq.as_slice_mut().unwrap(),
            self.bq.as_slice_mut().unwrap(),
            self.wk.as_slice_mut().unwrap(),
            self.bk.as_slice_mut().unwrap(),
            self.wv.as_slice_mut().unwrap(),
            self.bv.as_slice_mut().unwrap(),
            self.wo.as_slice_mut().unwrap(),
            self.bo.as_slice_mut().unwrap(),
            self.ln1_gamma.as_slice_mut().unwrap(),
            self.ln1_beta.as_slice_mut().unwrap(),
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
            self.ln2_gamma.as_slice_mut().unwrap(),
            self.ln2_beta.as_slice_mut().unwrap(),
        ]
    }

    fn check_shapes(&self, dim: usize, ff_dim: usize, index: usize) -> Result<()> {
        let expected = Self::shapes(dim, ff_dim);
        let actual: [Vec<usize>; 16] = [
            self.wq.shape().to_vec(),
            self.bq.shape().to_vec(),
            self.wk.shape().to_vec(),
            self.bk.shape().to_vec(),
            self.wv.shape().to_vec(),
            self.bv.shape().to_vec(),
            self.wo.shape().to_vec(),
            self.bo.shape().to_vec(),
            self.ln1_gamma.shape().to_vec(),
            self.ln1_beta.shape().to_vec(),
            self.w1.shape().to_vec(),
            self.b1.shape().to_vec(),
            self.w2.shape().to_vec(),
            self.b2.shape().to_vec(),
            self.ln2_gamma.shape().to_vec(),
            self.ln2_beta.shape().to_vec(),
        ];
        for ((name, e), a) in Self::TENSOR_NAMES.iter().zip(&expected).zip(&actual) {
            if e != a {
                return Err(Error::Schema(format!(
                    "block {index} tensor {name} has shape {a:?}, expected {e:?}"
                )));
            }
        }
        Ok(())
    }
}

impl ClassifierHead {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            w: Array2::zeros((num_classes, dim)),
            b: Array1::zeros(num_classes),
        }
    }

    pub fn tensors(&self) -> [&[f64]; 2] {
        [self.w.as_slice().unwrap(), self.b.as_slice().unwrap()]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [self.w.as_slice_mut().unwrap(), self.b.as_slice_mut().unwrap()]
    }
}

/// Frozen embedding, sinusoidal positions, `blocks` encoder blocks, mean
/// pooling over non-PAD positions, dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel {
    pub hyper: Hyperparams,
    embedding: EmbeddingTable,
    frozen: bool,
    pub blocks: Vec<EncoderBlock>,
    pub head: ClassifierHead,
}

impl TransformerModel {
    /// Glorot-uniform kernels, zero biases, unit layer-norm scales.
    pub fn new(hyper: Hyperparams, embedding: EmbeddingTable, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = (0..hyper.blocks)
            .map(|_| EncoderBlock::init(hyper.dim, hyper.ff_dim, &mut rng))
            .collect();
        let head = ClassifierHead {
            w: glorot(&mut rng, hyper.num_classes, hyper.dim),
            b: Array1::zeros(hyper.num_classes),
        };
        Self::from_parts(hyper, embedding, blocks, head)
    }

    pub fn from_parts(
        hyper: Hyperparams,
        embedding: EmbeddingTable,
        blocks: Vec<EncoderBlock>,
        head: ClassifierHead,
    ) -> Result<Self> {
        hyper.validate()?;
        if embedding.dim() != hyper.dim {
            return Err(Error::Schema(format!(
                "embedding dimension {} differs from model dimension {}",
                embedding.dim(),
                hyper.dim
            )));
        }
        if blocks.len() != hyper.blocks {
            return Err(Error::Schema(format!(
                "{} blocks given, hyperparameters say {}",
                blocks.len(),
                hyper.blocks
            )));
        }
        for (i, b) in blocks.iter().enumerate() {
            b.check_shapes(hyper.dim, hyper.ff_dim, i)?;
        }
        if head.w.shape() != [hyper.num_classes, hyper.dim] || head.b.len() != hyper.num_classes
        {
            return Err(Error::Schema(format!(
                "classifier head must be {}x{}",
                hyper.num_classes, hyper.dim
            )));
        }
        let all_finite = blocks
            .iter()
            .flat_map(|b| b.tensors())
            .chain(head.tensors())
            .all(|t| t.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::Schema("model weights must be finite".into()));
        }
        Ok(Self {
            hyper,
            embedding,
            frozen: true,
            blocks,
            head,
        })
    }

    pub fn embedding(&self) -> &EmbeddingTable {
        &self.embedding
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// All trainable tensors in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.blocks
            .iter()
            .flat_map(|b| b.tensors())
            .chain(self.head.tensors())
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.blocks {
            out.extend(b.tensors_mut());
        }
        out.extend(self.head.tensors_mut());
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Fixed sinusoidal encoding: `sin(p / 10000^(2i/d))` on even columns and
/// `cos` of the same angle on odd ones.
pub fn positional_encoding(max_seq: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((max_seq, dim), |(p, j)| {
        let i = (j / 2) as f64;
        let angle = p as f64 / 10000f64.powf(2.0 * i / dim as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocab;

    fn table(dim: usize) -> EmbeddingTable {
        EmbeddingTable::random(Vocab::from_words(["a", "b"]), dim, 0).unwrap()
    }

    #[test]
    fn heads_must_divide_dim() {
        let hyper = Hyperparams {
            dim: 6,
            heads: 4,
            ..Hyperparams::default()
        };
        assert!(TransformerModel::new(hyper, table(6), 0).is_err());
    }

    #[test]
    fn shapes_checked() {
        let hyper = Hyperparams::default();
        let m = TransformerModel::new(hyper.clone(), table(8), 0).unwrap();
        assert!(m.is_frozen());
        let mut blocks = m.blocks.clone();
        blocks[0].w1 = Array2::zeros((3, 8));
        assert!(matches!(
            TransformerModel::from_parts(hyper.clone(), table(8), blocks, m.head.clone()),
            Err(Error::Schema(_))
        ));
        assert!(TransformerModel::from_parts(hyper, table(4), m.blocks.clone(), m.head).is_err());
    }

    #[test]
    fn positional_first_row() {
        let pe = positional_encoding(3, 4);
        assert_eq!(pe.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[[1, 3]] - (0.01f64).cos()).abs() < 1e-15);
    }
}
