#![allow(dead_code)]

use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zonofair::embed::EmbeddingTable;
use zonofair::lm::{ClassifierHead, Hyperparams, TransformerModel};
use zonofair::vocab::Vocab;

/// Dimension 1, no blocks, logits `[x, −x]`, one word `x` embedded at 2.0.
pub fn affine_model() -> TransformerModel {
    let vocab = Vocab::from_words(["x"]);
    let table = EmbeddingTable::new(vocab, array![[0.0], [0.0], [2.0]]).unwrap();
    let hyper = Hyperparams {
        dim: 1,
        heads: 1,
        ff_dim: 1,
        blocks: 0,
        max_seq: 1,
        dropout: 0.0,
        ..Hyperparams::default()
    };
    let head = ClassifierHead {
        w: array![[1.0], [-1.0]],
        b: array![0.0, 0.0],
    };
    TransformerModel::from_parts(hyper, table, vec![], head).unwrap()
}

/// Table with entries uniform in `[-1, 1]` and a zero PAD row.
pub fn unit_table(vocab: Vocab, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::from_shape_fn((vocab.len(), dim), |_| rng.random_range(-1.0..1.0));
    w.row_mut(0).fill(0.0);
    EmbeddingTable::new(vocab, w).unwrap()
}

pub fn word_vocab(n: usize) -> Vocab {
    Vocab::from_words((0..n).map(|i| format!("w{i}")))
}

/// Random untrained model with perturbed biases and layer-norm parameters.
pub fn random_model(seed: u64, blocks: usize, max_seq: usize) -> TransformerModel {
    let table = unit_table(word_vocab(14), 4, seed);
    let hyper = Hyperparams {
        dim: 4,
        heads: 2,
        ff_dim: 6,
        blocks,
        max_seq,
        dropout: 0.0,
        ..Hyperparams::default()
    };
    let mut m = TransformerModel::new(hyper, table, seed ^ 0x5a5a).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 17);
    for t in m.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    m
}

pub fn random_ids(rng: &mut ChaCha8Rng, vocab_size: usize, len: usize, max_seq: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..len).map(|_| rng.random_range(2..vocab_size)).collect();
    ids.resize(max_seq, 0);
    ids
}

/// Uniform point of the ℓ∞ ball around the perturbed rows, as ids plus an
/// explicit input matrix.
pub fn sample_logits(
    model: &TransformerModel,
    ids: &[usize],
    perturbed_rows: &[usize],
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let (_, mut x) = model.input_rows(ids).unwrap();
    for &r in perturbed_rows {
        for j in 0..x.ncols() {
            x[[r, j]] += rng.random_range(-eps..=eps);
        }
    }
    model.logits_from_rows(&x).unwrap().to_vec()
}

pub const POSITIVE: [&str; 3] = ["good", "great", "fine"];
pub const NEGATIVE: [&str; 3] = ["bad", "awful", "poor"];
pub const FILLER: [&str; 6] = ["the", "a", "movie", "was", "plot", "very"];
/// Suffixes of the near-duplicate variants of every base word.
pub const VARIANTS: [&str; 2] = ["x", "z"];

pub fn base_words() -> Vec<&'static str> {
    POSITIVE.iter().chain(&NEGATIVE).chain(&FILLER).copied().collect()
}

/// Base words at unit scale, each with two variants within `spread` in ℓ∞.
pub fn cluster_table(spread: f64, seed: u64) -> EmbeddingTable {
    let mut words: Vec<String> = Vec::new();
    for w in base_words() {
        words.push(w.to_string());
        for v in VARIANTS {
            words.push(format!("{w}{v}"));
        }
    }
    let vocab = Vocab::from_words(words);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::zeros((vocab.len(), 8));
    for base in base_words() {
        let row: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        w.row_mut(vocab.id(base).unwrap()).assign(&ndarray::Array1::from(row.clone()));
        for v in VARIANTS {
            let near: Vec<f64> = row.iter().map(|x| x + rng.random_range(-spread..spread)).collect();
            w.row_mut(vocab.id(&format!("{base}{v}")).unwrap())
                .assign(&ndarray::Array1::from(near));
        }
    }
    EmbeddingTable::new(vocab, w).unwrap()
}

/// Sentences with exactly one sentiment keyword among fillers.
pub fn keyword_sentences(n: usize, seed: u64, max_seq: usize) -> Vec<(usize, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let label = rng.random_range(0..2usize);
            let kw = if label == 1 { POSITIVE } else { NEGATIVE };
            let len = rng.random_range(2..=max_seq);
            let slot = rng.random_range(0..len);
            let words: Vec<&str> = (0..len)
                .map(|i| {
                    if i == slot {
                        kw[rng.random_range(0..kw.len())]
                    } else {
                        FILLER[rng.random_range(0..FILLER.len())]
                    }
                })
                .collect();
            (label, words.join(" "))
        })
        .collect()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Worst relative error between the analytic contrastive gradient and
/// central differences (step 1e-5) over random small tables.
pub fn contrastive_gradient_error(trials: u64) -> f64 {
    use zonofair::embed::{batch_loss_and_gradient, WordPair};
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let table = EmbeddingTable::random(word_vocab(6), 3, trial).unwrap();
        let mut pairs = Vec::new();
        while pairs.len() < 6 {
            let mut side = || -> Vec<usize> {
                let n = rng.random_range(1..3);
                (0..n).map(|_| rng.random_range(2..8)).collect()
            };
            let (l, r) = (side(), side());
            if l != r {
                pairs.push(WordPair::new(l, r, rng.random_range(0..2)).unwrap());
            }
        }
        let refs: Vec<&WordPair> = pairs.iter().collect();
        let (alpha, margin) = (2.5, 0.3);
        let (_, grad) = batch_loss_and_gradient(&table, &refs, alpha, margin).unwrap();
        let h = 1e-5;
        for i in 0..table.vocab_size() {
            for j in 0..table.dim() {
                let bump = |delta: f64| {
                    let mut w = table.weights().clone();
                    w[[i, j]] += delta;
                    let t = EmbeddingTable::new(table.vocab().clone(), w).unwrap();
                    batch_loss_and_gradient(&t, &refs, alpha, margin).unwrap().0
                };
                let n = (bump(h) - bump(-h)) / (2.0 * h);
                worst = worst.max(rel_err(grad[[i, j]], n));
            }
        }
    }
    worst
}

/// Worst relative error of the full-model gradient (vocab 12, d = 4, h = 2,
/// one block, sequence length 4) against central differences.
pub fn model_gradient_error() -> f64 {
    use zonofair::lm::{loss_and_gradient, Example, FocalConfig};
    let table = EmbeddingTable::random(word_vocab(10), 4, 7).unwrap();
    let hyper = Hyperparams {
        dim: 4,
        heads: 2,
        ff_dim: 4,
        blocks: 1,
        max_seq: 4,
        dropout: 0.0,
        ..Hyperparams::default()
    };
    let mut m = TransformerModel::new(hyper, table, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for t in m.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let data = [
        Example { ids: vec![2, 5, 7, 0], label: 1 },
        Example { ids: vec![11, 3, 3, 4], label: 0 },
        Example { ids: vec![6, 0, 0, 0], label: 1 },
    ];
    let batch: Vec<&Example> = data.iter().collect();
    let focal = FocalConfig::default();
    let (_, grads) = loss_and_gradient(&m, &batch, focal, None).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (ti, a_t) in analytic.iter().enumerate() {
        for (i, &a) in a_t.iter().enumerate() {
            let mut plus = m.clone();
            plus.tensors_mut()[ti][i] += h;
            let mut minus = m.clone();
            minus.tensors_mut()[ti][i] -= h;
            let lp = loss_and_gradient(&plus, &batch, focal, None).unwrap().0;
            let lm = loss_and_gradient(&minus, &batch, focal, None).unwrap().0;
            worst = worst.max(rel_err(a, (lp - lm) / (2.0 * h)));
        }
    }
    worst
}
