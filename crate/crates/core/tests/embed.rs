use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zonofair::embed::{
    batch_loss_and_gradient, load_pairs, nearest_neighbors, pair_distance, train_embedding,
    ContrastiveConfig, EmbeddingTable, Norm, WordPair,
};
use zonofair::vocab::Vocab;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn toy_corpus() -> (Vocab, Vec<WordPair>) {
    let raw = load_pairs(&fixture("toy_pairs.tsv")).unwrap();
    let mut words: Vec<String> = raw.iter().flat_map(|p| [p.left.clone(), p.right.clone()]).collect();
    words.sort();
    words.dedup();
    assert_eq!(words.len(), 20);
    let vocab = Vocab::from_words(words);
    let pairs = raw.iter().map(|r| WordPair::from_raw(&vocab, r).unwrap()).collect();
    (vocab, pairs)
}

#[test]
fn toy_corpus_separates_similar_from_dissimilar() {
    let (vocab, pairs) = toy_corpus();
    assert_eq!(pairs.iter().filter(|p| p.label == 0).count(), 5);
    let table = EmbeddingTable::random(vocab, 8, 1).unwrap();
    let cfg = ContrastiveConfig::gender_phase();
    assert_eq!((cfg.alpha, cfg.margin, cfg.epochs), (1000.0, 1.0, 150));
    let (trained, history) = train_embedding(&pairs, &cfg, table).unwrap();
    assert_eq!(history.len(), 150);
    let dist = |label| -> Vec<f64> {
        pairs
            .iter()
            .filter(|p| p.label == label)
            .map(|p| pair_distance(&trained, p, Norm::LInf).unwrap())
            .collect()
    };
    let similar = dist(0).into_iter().fold(0.0, f64::max);
    let dissimilar = dist(1).into_iter().fold(f64::INFINITY, f64::min);
    assert!(similar < dissimilar, "{similar} vs {dissimilar}");
}

#[test]
fn toy_corpus_training_is_reproducible() {
    let (vocab, pairs) = toy_corpus();
    let cfg = ContrastiveConfig {
        epochs: 20,
        ..ContrastiveConfig::gender_phase()
    };
    let t = EmbeddingTable::random(vocab, 8, 1).unwrap();
    let a = train_embedding(&pairs, &cfg, t.clone()).unwrap();
    let b = train_embedding(&pairs, &cfg, t).unwrap();
    assert_eq!(a, b);
}

#[test]
fn contrastive_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..5 {
        let vocab = Vocab::from_words((0..6).map(|i| format!("t{i}")));
        let table = EmbeddingTable::random(vocab, 3, trial).unwrap();
        let mut pairs = Vec::new();
        for _ in 0..6 {
            let mut side = || -> Vec<usize> {
                let n = rng.random_range(1..3);
                (0..n).map(|_| rng.random_range(2..8)).collect()
            };
            let (l, r) = (side(), side());
            if l == r {
                continue;
            }
            pairs.push(WordPair::new(l, r, rng.random_range(0..2)).unwrap());
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
                let a = grad[[i, j]];
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                assert!(rel < 1e-4, "row {i} col {j}: {a} vs {n}");
            }
        }
    }
}

#[test]
fn gender_fixture_distance() {
    let t = EmbeddingTable::load(&fixture("gender_table.json")).unwrap();
    let p = WordPair::from_text(t.vocab(), "female", "male", 0).unwrap();
    assert_eq!(pair_distance(&t, &p, Norm::LInf).unwrap(), 3e-4);
    let set = nearest_neighbors(&t, "female", 50).unwrap();
    assert!(set.neighbors.iter().any(|(w, _)| w == "male"));
    for w in set.neighbors.windows(2) {
        assert!(w[0].1 <= w[1].1);
    }
    for (w, d) in &set.neighbors {
        let p = WordPair::from_text(t.vocab(), "female", w, 0).unwrap();
        assert_eq!(pair_distance(&t, &p, Norm::LInf).unwrap(), *d);
    }
}

#[test]
fn toy_corpus_loss_falls_window_by_window() {
    let (vocab, pairs) = toy_corpus();
    let table = EmbeddingTable::random(vocab, 8, 1).unwrap();
    let (_, h) = train_embedding(&pairs, &ContrastiveConfig::gender_phase(), table).unwrap();
    let means: Vec<f64> = h.chunks(10).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    for w in means.windows(2) {
        assert!(w[1] <= w[0], "{means:?}");
    }
}
