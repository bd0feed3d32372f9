//! Concrete forward pass and reverse-mode gradients.
//!
//! Only non-PAD positions take part; each keeps its original index for the
//! positional encoding. This matches masking PAD keys and pooling over the
//! unmasked rows, so trailing padding never changes the logits.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::model::{positional_encoding, ClassifierHead, EncoderBlock, TransformerModel};
use crate::error::{Error, Result};
use crate::vocab::PAD_ID;

/// Row-wise numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn softmax_rows(s: &Array2<f64>) -> Array2<f64> {
    let mut out = s.clone();
    for mut row in out.rows_mut() {
        let p = softmax(row.as_slice().unwrap());
        row.assign(&Array1::from(p));
    }
    out
}

fn affine_rows(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(&w.t()) + b
}

struct LayerNormCache {
    xhat: Array2<f64>,
    inv: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>, eps: f64) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv = Array1::zeros(x.nrows());
    for (i, mut row) in xhat.rows_mut().into_iter().enumerate() {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        let r = 1.0 / (var + eps).sqrt();
        row *= r;
        inv[i] = r;
    }
    let y = &xhat * g + b;
    (y, LayerNormCache { xhat, inv })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    g: &Array1<f64>,
    cache: &LayerNormCache,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let dxhat = dy * g;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let dh = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let sum = dh.sum();
        let dot = dh.dot(&xh);
        let r = cache.inv[i];
        let row = (&dh * d - sum - &xh * dot) * (r / d);
        dx.row_mut(i).assign(&row);
    }
    dx
}

fn dropout_mask(shape: (usize, usize), rate: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Array2<f64>> {
    let rng = rng?;
    if rate == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(Array2::from_shape_fn(shape, |_| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}

struct BlockCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    mask1: Option<Array2<f64>>,
    ln1: LayerNormCache,
    y1: Array2<f64>,
    pre_relu: Array2<f64>,
    hidden: Array2<f64>,
    mask2: Option<Array2<f64>>,
    ln2: LayerNormCache,
}

fn block_forward(
    block: &EncoderBlock,
    x: &Array2<f64>,
    heads: usize,
    eps: f64,
    dropout: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, BlockCache) {
    let (len, d) = x.dim();
    let dk = d / heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let q = affine_rows(x, &block.wq, &block.bq);
    let k = affine_rows(x, &block.wk, &block.bk);
    let v = affine_rows(x, &block.wv, &block.bv);
    let mut attn = Array2::zeros((len, d));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        let p = softmax_rows(&scores);
        attn.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }
    let mut o = affine_rows(&attn, &block.wo, &block.bo);
    let mask1 = dropout_mask((len, d), dropout, rng.as_deref_mut());
    if let Some(m) = &mask1 {
        o *= m;
    }
    let (y1, ln1) = layer_norm(&(x + &o), &block.ln1_gamma, &block.ln1_beta, eps);
    let pre_relu = affine_rows(&y1, &block.w1, &block.b1);
    let hidden = pre_relu.mapv(|v| v.max(0.0));
    let mut f = affine_rows(&hidden, &block.w2, &block.b2);
    let mask2 = dropout_mask((len, d), dropout, rng);
    if let Some(m) = &mask2 {
        f *= m;
    }
    let (y2, ln2) = layer_norm(&(&y1 + &f), &block.ln2_gamma, &block.ln2_beta, eps);
    let cache = BlockCache {
        x: x.clone(),
        q,
        k,
        v,
        probs,
        attn,
        mask1,
        ln1,
        y1,
        pre_relu,
        hidden,
        mask2,
        ln2,
    };
    (y2, cache)
}

fn block_backward(block: &EncoderBlock, c: &BlockCache, dy2: &Array2<f64>, heads: usize, g: &mut EncoderBlock) -> Array2<f64> {
    let d = dy2.ncols();
    let dk = d / heads;
    let scale = 1.0 / (dk as f64).sqrt();

    let dh2 = layer_norm_backward(dy2, &block.ln2_gamma, &c.ln2, &mut g.ln2_gamma, &mut g.ln2_beta);
    let mut dy1 = dh2.clone();
    let mut df = dh2;
    if let Some(m) = &c.mask2 {
        df *= m;
    }
    g.w2 += &df.t().dot(&c.hidden);
    g.b2 += &df.sum_axis(Axis(0));
    let mut du = df.dot(&block.w2);
    du.zip_mut_with(&c.pre_relu, |g, &u| {
        if u <= 0.0 {
            *g = 0.0
        }
    });
    g.w1 += &du.t().dot(&c.y1);
    g.b1 += &du.sum_axis(Axis(0));
    dy1 += &du.dot(&block.w1);

    let dh1 = layer_norm_backward(&dy1, &block.ln1_gamma, &c.ln1, &mut g.ln1_gamma, &mut g.ln1_beta);
    let mut dx = dh1.clone();
    let mut d_o = dh1;
    if let Some(m) = &c.mask1 {
        d_o *= m;
    }
    g.wo += &d_o.t().dot(&c.attn);
    g.bo += &d_o.sum_axis(Axis(0));
    let da = d_o.dot(&block.wo);

    let mut dq = Array2::zeros(c.q.raw_dim());
    let mut dkm = Array2::zeros(c.k.raw_dim());
    let mut dv = Array2::zeros(c.v.raw_dim());
    for h in 0..heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let p = &c.probs[h];
        let da_h = da.slice(cols);
        let dp = da_h.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&da_h));
        // softmax backward per row: ds = p * (dp - <dp, p>)
        let inner = (&dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ds = (p * &(&dp - &inner)) * scale;
        dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
        dkm.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
    }
    for (dm, w, gw, gb) in [
        (&dq, &block.wq, &mut g.wq, &mut g.bq),
        (&dkm, &block.wk, &mut g.wk, &mut g.bk),
        (&dv, &block.wv, &mut g.wv, &mut g.bv),
    ] {
        *gw += &dm.t().dot(&c.x);
        *gb += &dm.sum_axis(Axis(0));
        dx += &dm.dot(w);
    }
    dx
}

/// Gradients with the same layout as the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub blocks: Vec<EncoderBlock>,
    pub head: ClassifierHead,
}

impl ModelGrads {
    pub fn zeros_like(model: &TransformerModel) -> Self {
        let h = &model.hyper;
        Self {
            blocks: (0..h.blocks).map(|_| EncoderBlock::zeros(h.dim, h.ff_dim)).collect(),
            head: ClassifierHead::zeros(h.num_classes, h.dim),
        }
    }

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

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardTrace {
    blocks: Vec<BlockCache>,
    pooled: Array1<f64>,
    len: usize,
    pub logits: Array1<f64>,
}

impl TransformerModel {
    /// Indices of the non-PAD tokens of `ids`.
    pub fn active_positions(ids: &[usize]) -> Vec<usize> {
        ids.iter()
            .enumerate()
            .filter(|(_, &t)| t != PAD_ID)
            .map(|(i, _)| i)
            .collect()
    }

    pub(crate) fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if ids.len() != self.hyper.max_seq {
            return Err(Error::invalid(format!(
                "sequence of length {} does not match max_seq {}",
                ids.len(),
                self.hyper.max_seq
            )));
        }
        let n = self.embedding().vocab_size();
        if let Some(&bad) = ids.iter().find(|&&t| t >= n) {
            return Err(Error::invalid(format!(
                "token id {bad} outside vocabulary of size {n}"
            )));
        }
        Ok(())
    }

    /// Input rows for the non-PAD tokens: embedding plus positional encoding.
    pub fn input_rows(&self, ids: &[usize]) -> Result<(Vec<usize>, Array2<f64>)> {
        self.check_ids(ids)?;
        let positions = Self::active_positions(ids);
        let pe = positional_encoding(self.hyper.max_seq, self.hyper.dim);
        let mut x = Array2::zeros((positions.len(), self.hyper.dim));
        for (r, &p) in positions.iter().enumerate() {
            let row = &self.embedding().row(ids[p]) + &pe.row(p);
            x.row_mut(r).assign(&row);
        }
        Ok((positions, x))
    }

    pub(crate) fn trace(&self, ids: &[usize], rng: Option<&mut ChaCha8Rng>) -> Result<ForwardTrace> {
        let (_, x) = self.input_rows(ids)?;
        self.trace_rows(x, rng)
    }

    fn trace_rows(&self, mut x: Array2<f64>, mut rng: Option<&mut ChaCha8Rng>) -> Result<ForwardTrace> {
        let h = &self.hyper;
        let len = x.nrows();
        let mut caches = Vec::with_capacity(self.blocks.len());
        if len > 0 {
            for block in &self.blocks {
                let (y, c) = block_forward(block, &x, h.heads, h.layer_norm_eps, h.dropout, rng.as_deref_mut());
                caches.push(c);
                x = y;
            }
        }
        let pooled = if len == 0 {
            Array1::zeros(h.dim)
        } else {
            x.mean_axis(Axis(0)).unwrap()
        };
        let logits = self.head.w.dot(&pooled) + &self.head.b;
        Ok(ForwardTrace {
            blocks: caches,
            pooled,
            len,
            logits,
        })
    }

    /// Logits for one sequence of token ids (inference mode, no dropout).
    pub fn logits(&self, ids: &[usize]) -> Result<Array1<f64>> {
        Ok(self.trace(ids, None)?.logits)
    }

    /// Logits for explicit input rows (embedding plus position) of the
    /// non-PAD tokens, e.g. a perturbed copy of [`Self::input_rows`].
    pub fn logits_from_rows(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.hyper.dim || x.nrows() > self.hyper.max_seq {
            return Err(Error::invalid(format!(
                "input rows of shape {:?} do not fit dim {} and max_seq {}",
                x.dim(),
                self.hyper.dim,
                self.hyper.max_seq
            )));
        }
        Ok(self.trace_rows(x.clone(), None)?.logits)
    }

    pub fn predict_proba(&self, ids: &[usize]) -> Result<Vec<f64>> {
        Ok(softmax(self.logits(ids)?.as_slice().unwrap()))
    }

    /// Arg-max class; ties go to the lower index.
    pub fn predict(&self, ids: &[usize]) -> Result<usize> {
        Ok(argmax(self.logits(ids)?.as_slice().unwrap()))
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative
    /// with respect to the logits is `dlogits`.
    pub(crate) fn backward(&self, trace: &ForwardTrace, dlogits: &Array1<f64>, grads: &mut ModelGrads) {
        let dz = dlogits.view().insert_axis(Axis(1));
        grads.head.w += &dz.dot(&trace.pooled.view().insert_axis(Axis(0)));
        grads.head.b += dlogits;
        if trace.len == 0 {
            return;
        }
        let dp = self.head.w.t().dot(dlogits) / trace.len as f64;
        let mut dx = Array2::from_shape_fn((trace.len, self.hyper.dim), |(_, j)| dp[j]);
        for (i, cache) in trace.blocks.iter().enumerate().rev() {
            dx = block_backward(&self.blocks[i], cache, &dx, self.hyper.heads, &mut grads.blocks[i]);
        }
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
