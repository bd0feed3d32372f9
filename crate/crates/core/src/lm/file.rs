//! Model file: hyperparameters, the embedding table, and every tensor as a
//! row-major `{shape, data}` pair.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ClassifierHead, EncoderBlock, Hyperparams, TransformerModel};
use crate::embed::{EmbeddingTable, TableFile};
use crate::error::{Error, Result};
use crate::io;

const MODEL_FORMAT: &str = "zonofair.transformer";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadFile {
    w: Tensor,
    b: Tensor,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    hyper: Hyperparams,
    embedding: TableFile,
    blocks: Vec<BTreeMap<String, Tensor>>,
    head: HeadFile,
}

fn tensor(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor {
        shape: shape.to_vec(),
        data: data.to_vec(),
    }
}

fn fill(dst: &mut [f64], src: &Tensor, expected: &[usize], what: &str) -> Result<()> {
    if src.shape != expected || src.data.len() != dst.len() {
        return Err(Error::Schema(format!(
            "{what} has shape {:?} with {} values, expected {expected:?}",
            src.shape,
            src.data.len()
        )));
    }
    dst.copy_from_slice(&src.data);
    Ok(())
}

impl TransformerModel {
    fn to_file(&self) -> ModelFile {
        let h = &self.hyper;
        let shapes = EncoderBlock::shapes(h.dim, h.ff_dim);
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                EncoderBlock::TENSOR_NAMES
                    .iter()
                    .zip(&shapes)
                    .zip(b.tensors())
                    .map(|((n, s), t)| (n.to_string(), tensor(s, t)))
                    .collect()
            })
            .collect();
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            hyper: h.clone(),
            embedding: self.embedding().to_file(),
            blocks,
            head: HeadFile {
                w: tensor(self.head.w.shape(), self.head.w.as_slice().unwrap()),
                b: tensor(self.head.b.shape(), self.head.b.as_slice().unwrap()),
            },
        }
    }

    fn from_file(f: ModelFile) -> Result<Self> {
        if f.format != MODEL_FORMAT {
            return Err(Error::Schema(format!(
                "expected format {MODEL_FORMAT:?}, found {:?}",
                f.format
            )));
        }
        if f.version != MODEL_VERSION {
            return Err(Error::Schema(format!("unsupported model version {}", f.version)));
        }
        let h = f.hyper;
        h.validate().map_err(|e| Error::Schema(e.to_string()))?;
        let shapes = EncoderBlock::shapes(h.dim, h.ff_dim);
        let mut blocks = Vec::with_capacity(f.blocks.len());
        for (i, mut map) in f.blocks.into_iter().enumerate() {
            let mut block = EncoderBlock::zeros(h.dim, h.ff_dim);
            for ((name, shape), dst) in EncoderBlock::TENSOR_NAMES
                .iter()
                .zip(&shapes)
                .zip(block.tensors_mut())
            {
                let src = map
                    .remove(*name)
                    .ok_or_else(|| Error::Schema(format!("block {i} lacks tensor {name}")))?;
                fill(dst, &src, shape, &format!("block {i} tensor {name}"))?;
            }
            if let Some(extra) = map.keys().next() {
                return Err(Error::Schema(format!("block {i} has unknown tensor {extra}")));
            }
            blocks.push(block);
        }
        let mut head = ClassifierHead::zeros(h.num_classes, h.dim);
        fill(head.w.as_slice_mut().unwrap(), &f.head.w, &[h.num_classes, h.dim], "head w")?;
        fill(head.b.as_slice_mut().unwrap(), &f.head.b, &[h.num_classes], "head b")?;
        let embedding = EmbeddingTable::from_file(f.embedding)?;
        TransformerModel::from_parts(h, embedding, blocks, head)
    }

    pub fn to_json(&self) -> String {
        io::to_json_string(&self.to_file())
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        Self::from_file(io::from_json_str(text, origin)?)
    }
}

pub fn save_model(model: &TransformerModel, path: &Path) -> Result<()> {
    io::write_json(path, &model.to_file())
}

pub fn load_model(path: &Path) -> Result<TransformerModel> {
    TransformerModel::from_file(io::read_json(path)?)
}
