//! Abstract forward pass: the concrete pipeline of [`crate::lm`] replayed on
//! zonotopes, one row-major `L × d` layout per stage.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::lm::{EncoderBlock, Hyperparams, TransformerModel};
use crate::zonoset::{
    enclose_elementwise_with, matmul_zz, multiply_elementwise, softmax_rows, ActivationKind,
    EnclosureConfig, Zonotope, DEFAULT_ORDER_FACTOR,
};

/// Knobs of the abstract interpreter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    /// Each block's output is reduced to at most `order_factor · L · d`
    /// generators.
    pub order_factor: usize,
    pub enclosure: EnclosureConfig,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            order_factor: DEFAULT_ORDER_FACTOR,
            enclosure: EnclosureConfig::default(),
        }
    }
}

/// Input set: every row in `perturbed` (indices into the non-PAD rows) gets
/// `d` independent symbols of radius `eps`; positional terms are constant.
pub(crate) fn input_set(x: &Array2<f64>, perturbed: &[usize], eps: f64) -> Result<Zonotope> {
    let (rows, d) = x.dim();
    let center = Array1::from_iter(x.iter().copied());
    let mut gens = Array2::zeros((rows * d, perturbed.len() * d));
    for (k, &r) in perturbed.iter().enumerate() {
        for j in 0..d {
            gens[[r * d + j, k * d + j]] = eps;
        }
    }
    Zonotope::new(center, gens)
}

fn layer_norm(z: &Zonotope, rows: usize, gamma: &Array1<f64>, beta: &Array1<f64>, eps: f64, cfg: &EnclosureConfig) -> Result<Zonotope> {
    let d = gamma.len();
    let centering = Array2::from_shape_fn((d, d), |(i, j)| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - 1.0 / d as f64
    });
    let centered = z.linear_rows(rows, centering.view(), Array1::zeros(d).view())?;
    let sq = multiply_elementwise(&centered, &centered)?;
    let mean = Array2::from_elem((1, d), 1.0 / d as f64);
    let var = sq.linear_rows(rows, mean.view(), Array1::from_elem(1, eps).view())?;
    let std = enclose_elementwise_with(&var, ActivationKind::Sqrt, cfg, Some(&Array1::from_elem(rows, eps)))?;
    let inv = enclose_elementwise_with(
        &std,
        ActivationKind::Reciprocal,
        cfg,
        Some(&Array1::from_elem(rows, eps.sqrt())),
    )?;
    let spread: Vec<usize> = (0..rows * d).map(|i| i / d).collect();
    let inv = inv.select(&spread)?;
    let normed = multiply_elementwise(&centered.pad_to(inv.num_generators()), &inv)?;
    normed.linear_rows(rows, Array2::from_diag(gamma).view(), beta.view())
}

fn attention(block: &EncoderBlock, x: &Zonotope, rows: usize, hyper: &Hyperparams, cfg: &EnclosureConfig) -> Result<Zonotope> {
    let d = hyper.dim;
    let dk = hyper.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    let q = x.linear_rows(rows, block.wq.view(), block.bq.view())?;
    let k = x.linear_rows(rows, block.wk.view(), block.bk.view())?;
    let v = x.linear_rows(rows, block.wv.view(), block.bv.view())?;
    let mut heads: Vec<Zonotope> = Vec::with_capacity(hyper.heads);
    let mut symbols = x.num_generators();
    for h in 0..hyper.heads {
        let q_idx: Vec<usize> = (0..rows * dk).map(|i| (i / dk) * d + h * dk + i % dk).collect();
        // K_hᵀ as a dk × L layout.
        let kt_idx: Vec<usize> = (0..dk * rows).map(|i| (i % rows) * d + h * dk + i / rows).collect();
        // Fresh symbols of earlier heads must not be reused.
        let qh = q.select(&q_idx)?.pad_to(symbols);
        let kt = k.select(&kt_idx)?.pad_to(symbols);
        let scores = matmul_zz(&qh, (rows, dk), &kt, (dk, rows))?.scale(scale);
        let probs = softmax_rows(&scores, rows, cfg)?;
        let vh = v.select(&q_idx)?.pad_to(probs.num_generators());
        let out = matmul_zz(&probs, (rows, rows), &vh, (rows, dk))?;
        symbols = out.num_generators();
        heads.push(out);
    }
    let stacked = Zonotope::stack(&heads);
    let merge: Vec<usize> = (0..rows * d)
        .map(|i| {
            let (r, c) = (i / d, i % d);
            (c / dk) * rows * dk + r * dk + c % dk
        })
        .collect();
    let concat = stacked.select(&merge)?;
    concat.linear_rows(rows, block.wo.view(), block.bo.view())
}

pub(crate) fn block(block: &EncoderBlock, x: &Zonotope, rows: usize, hyper: &Hyperparams, cfg: &PropagationConfig) -> Result<Zonotope> {
    let enc = &cfg.enclosure;
    let eps = hyper.layer_norm_eps;
    let o = attention(block, x, rows, hyper, enc)?;
    let y1 = layer_norm(&x.add(&o)?, rows, &block.ln1_gamma, &block.ln1_beta, eps, enc)?;
    let u = y1.linear_rows(rows, block.w1.view(), block.b1.view())?;
    let f = enclose_elementwise_with(&u, ActivationKind::ReLU, enc, None)?;
    let g = f.linear_rows(rows, block.w2.view(), block.b2.view())?;
    let y2 = layer_norm(&y1.add(&g)?, rows, &block.ln2_gamma, &block.ln2_beta, eps, enc)?;
    y2.reduce_order(cfg.order_factor * rows * hyper.dim)
}

/// Logit set of `model` when the rows `perturbed` (indices into the
/// non-PAD rows) of the input move in an ℓ∞ ball of radius `eps`.
pub(crate) fn logits(model: &TransformerModel, x: &Array2<f64>, perturbed: &[usize], eps: f64, cfg: &PropagationConfig) -> Result<Zonotope> {
    let hyper = &model.hyper;
    let (rows, d) = x.dim();
    if rows == 0 {
        return Zonotope::point(model.head.b.clone());
    }
    if let Some(&bad) = perturbed.iter().find(|&&r| r >= rows) {
        return Err(Error::invalid(format!("perturbed row {bad} out of range")));
    }
    let mut z = input_set(x, perturbed, eps)?;
    for b in &model.blocks {
        z = block(b, &z, rows, hyper, cfg)?;
    }
    let pool = Array2::from_shape_fn((d, rows * d), |(i, j)| {
        if j % d == i {
            1.0 / rows as f64
        } else {
            0.0
        }
    });
    let pooled = z.affine(pool.view(), Array1::zeros(d).view())?;
    pooled.affine(model.head.w.view(), model.head.b.view())
}
